import json
import subprocess
import sys


GEN_KEYS = {"statement", "question", "solution", "op", "layout", "seed", "graph_digest"}
AUG_KEYS = {"text", "mode", "retry_rate", "events", "mask_spans", "seed", "problem"}


def run_cli(args, stdin=None):
    return subprocess.run([sys.executable, "-m", "gsmgen.cli", *args],
                          input=stdin, capture_output=True, text=True)


def test_gen_emits_schema_valid_records():
    proc = run_cli(["gen", "--preset", "med", "--op", "7", "--n", "20", "--seed", "1"])
    assert proc.returncode == 0, proc.stderr
    lines = proc.stdout.strip().splitlines()
    assert len(lines) == 20
    for line in lines:
        rec = json.loads(line)
        assert set(rec) == GEN_KEYS
        assert rec["op"] == 7 and rec["layout"] == "pq"


def test_gen_is_byte_deterministic():
    args = ["gen", "--preset", "med", "--op-range", "5..9", "--n", "8", "--seed", "3"]
    assert run_cli(args).stdout == run_cli(args).stdout
    other = run_cli(["gen", "--preset", "med", "--op-range", "5..9", "--n", "8", "--seed", "4"])
    assert other.stdout != run_cli(args).stdout


def test_gen_reask_changes_the_question():
    plain = run_cli(["gen", "--op", "8", "--n", "4", "--seed", "5"])
    reasked = run_cli(["gen", "--op", "8", "--n", "4", "--seed", "5", "--reask"])
    plain_recs = [json.loads(l) for l in plain.stdout.splitlines()]
    reask_recs = [json.loads(l) for l in reasked.stdout.splitlines()]
    assert [r["statement"] for r in plain_recs] == [r["statement"] for r in reask_recs]
    assert any(p["question"] != r["question"] for p, r in zip(plain_recs, reask_recs))
    assert any(r["op"] != 8 for r in reask_recs)  # the op value may change


def test_gen_qp_layout_and_no_answer():
    proc = run_cli(["gen", "--op", "7", "--n", "2", "--seed", "2", "--layout", "qp",
                    "--no-answer"])
    for line in proc.stdout.splitlines():
        rec = json.loads(line)
        assert rec["layout"] == "qp"
        assert "Answer:" not in rec["solution"]


def test_pipeline_gen_augment_verify():
    gen = run_cli(["gen", "--op", "7", "--n", "6", "--seed", "7"])
    aug = run_cli(["augment", "--mode", "retry", "--retry-rate", "0.5", "--seed", "1"],
                  stdin=gen.stdout)
    assert aug.returncode == 0, aug.stderr
    recs = [json.loads(l) for l in aug.stdout.splitlines()]
    assert len(recs) == 6
    assert all(set(r) == AUG_KEYS for r in recs)
    ver = run_cli(["verify"], stdin=aug.stdout)
    assert ver.returncode == 0
    reports = [json.loads(l) for l in ver.stdout.splitlines()]
    assert all(r["fully_correct"] for r in reports)
    agg = run_cli(["verify", "--aggregate"], stdin=aug.stdout)
    assert json.loads(agg.stdout)["accuracy"] == 1.0


def test_verify_corrupted_record_is_data_not_error():
    gen = run_cli(["gen", "--op", "7", "--n", "1", "--seed", "9"])
    rec = json.loads(gen.stdout)
    rec["solution"] = rec["solution"].replace("= ", "= 9", 1)
    ver = run_cli(["verify"], stdin=json.dumps(rec) + "\n")
    assert ver.returncode == 0  # verification failure is data, not an error
    assert json.loads(ver.stdout)["fully_correct"] is False
    # a record whose problem cannot even be parsed also yields a failed report
    mangled = {"statement": "Total gibberish.", "question": "Eh?", "solution": "Nope."}
    ver = run_cli(["verify"], stdin=json.dumps(mangled) + "\n")
    assert ver.returncode == 0
    report = json.loads(ver.stdout)
    assert report["fully_correct"] is False and report["first_error"][0] == -1
    # cyclic statements are rejected without crashing the batch
    cyclic = {
        "statement": "The number of each Central High's Film Studio equals each "
                     "Central High's Dance Studio. The number of each Central High's "
                     "Dance Studio equals each Central High's Film Studio.",
        "question": "How many Film Studio does Central High have?",
        "solution": "Nope.",
    }
    ver = run_cli(["verify"], stdin=json.dumps(cyclic) + "\n")
    assert ver.returncode == 0
    assert json.loads(ver.stdout)["fully_correct"] is False


def test_augment_mask_off():
    gen = run_cli(["gen", "--op", "7", "--n", "2", "--seed", "4"])
    aug = run_cli(["augment", "--mode", "weak", "--retry-rate", "0.4", "--seed", "2",
                   "--mask", "off"], stdin=gen.stdout)
    assert all(json.loads(l)["mask_spans"] == [] for l in aug.stdout.splitlines())


def test_pack_binary_and_jsonl(tmp_path):
    gen = run_cli(["gen", "--op", "7", "--n", "10", "--seed", "11"])
    aug = run_cli(["augment", "--mode", "retry", "--retry-rate", "0.3", "--seed", "3"],
                  stdin=gen.stdout)
    out = tmp_path / "train.bin"
    proc = run_cli(["pack", "--context-len", "768", "--seed", "0",
                    "--format", "bin", "--output", str(out)], stdin=aug.stdout)
    assert proc.returncode == 0, proc.stderr
    assert out.exists() and (tmp_path / "train.bin.mask").exists()
    jl = run_cli(["pack", "--context-len", "768", "--seed", "0"], stdin=aug.stdout)
    for line in jl.stdout.splitlines():
        rec = json.loads(line)
        assert len(rec["ids"]) <= 768 and len(rec["ids"]) == len(rec["mask"])


def test_eval_emits_stats_json():
    proc = run_cli(["eval", "--mode", "retry_upon_regret", "--detector", "versionP",
                    "--policy-error-rate", "0.3", "--op", "7", "--n", "24", "--seed", "2"])
    assert proc.returncode == 0, proc.stderr
    stats = json.loads(proc.stdout)
    assert stats["n"] == 24 and 0.0 <= stats["accuracy"] <= 1.0
    assert stats["detector_accuracy"] == 1.0


def test_usage_errors_exit_nonzero():
    assert run_cli(["augment"]).returncode == 2              # missing required flags
    assert run_cli(["gen", "--op-range", "9..3"]).returncode == 2
    assert run_cli(["frobnicate"]).returncode == 2
    bad = run_cli(["augment", "--mode", "retry", "--retry-rate", "1.5"], stdin="")
    assert bad.returncode == 1  # rate outside [0,1), rejected before reading records
    assert "retry_rate" in bad.stderr
    capped = run_cli(["augment", "--mode", "retry", "--retry-rate", "0.995"], stdin="")
    assert capped.returncode == 1  # config caps the rate at 0.99


def test_pack_bin_requires_output():
    gen = run_cli(["gen", "--op", "7", "--n", "1", "--seed", "0"])
    proc = run_cli(["pack", "--context-len", "768", "--format", "bin"], stdin=gen.stdout)
    assert proc.returncode == 1

"""Synthetic grade-school math reasoning data: dependency-graph problem
generation over Z/23, retry-data augmentation, strict verification, and a
decoding harness with simulated error detectors."""

from .augment import (AugmentedSample, inject_retry, inject_retry_miss,
                      inject_retry_weak, mask_spans, strip_retries)
from .corpus import (PackedSequence, TokenStream, detokenize, fits_eval_window,
                     pack, read_packed, tokenize, write_packed)
from .graphgen import (DependencyGraph, GenConfig, Parameter, StructureGraph,
                       can_next, closure_op, graph_digest, load_config,
                       necessary_set, preset_config, reask,
                       sample_dependency_graph, sample_problem_graph,
                       sample_structure_graph)
from .harness import (DecodeConfig, ErrorDetector, SyntheticOraclePolicy,
                      build_problem_set, decode, detector_preset, eval_accuracy,
                      retry_upon_regret)
from .render import (Problem, SolutionScript, problem_from_text, render_problem,
                     render_solution, sample_text)
from .semantics import MODULUS, AggSpec, BinOpChain, decompose, mod_eval
from .verify import (ParsedSolution, VerifierReport, aggregate, parse_solution,
                     verify_record, verify_text)

__version__ = "0.1.0"

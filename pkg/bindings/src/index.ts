/**
 * Record iterators over the gsmgen CLI for ML data pipelines.
 *
 * Each entry point drives one subcommand of the primary toolkit and yields
 * its JSONL records as plain objects, field-for-field identical to the CLI
 * output for the same options and seeds. Raw-line variants are exported for
 * consumers (and tests) that need byte-level parity.
 */

import { mkdtemp, readFile, rm } from 'node:fs/promises';
import { tmpdir } from 'node:os';
import { join } from 'node:path';

import { CliError, cliBuffer, cliLines } from './cli.js';

export { CliError, pythonBin } from './cli.js';

export interface ProblemRecord {
  statement: string;
  question: string;
  solution: string;
  op: number;
  layout: 'pq' | 'qp';
  seed: number;
  graph_digest: string;
}

export interface AugmentEvent {
  position: number;
  param: string | null;
  suppressed: boolean;
}

export interface AugmentedRecord {
  text: string;
  mode: string;
  retry_rate: number;
  events: AugmentEvent[];
  mask_spans: Array<[number, number]>;
  seed: number;
  problem: ProblemRecord;
}

export interface VerifierReport {
  fully_correct: boolean;
  answer_correct: boolean;
  first_error: [number, string] | null;
  retry_count: number;
  unnecessary_params: number;
  unnecessary_ops: number;
  spurious_retries: number;
  answer: number | null;
}

export interface GenOptions {
  n: number;
  seed: number;
  preset?: 'med' | 'hard';
  layout?: 'pq' | 'qp';
  op?: number;
  opRange?: [number, number];
  reask?: boolean;
  noAnswer?: boolean;
  universe?: string;
}

export interface AugmentOptions {
  mode: 'retry' | 'weak' | 'miss';
  retryRate: number;
  seed: number;
  mask?: boolean;
  wholeSentence?: boolean;
}

export interface VerifyOptions {
  tolerantRetry?: boolean;
}

export interface PackOptions {
  contextLen: number;
  seed?: number;
}

export function genArgs(opts: GenOptions): string[] {
  if (!Number.isInteger(opts.n) || opts.n < 0) {
    throw new RangeError(`n must be a non-negative integer, got ${opts.n}`);
  }
  const args = ['gen', '--n', String(opts.n), '--seed', String(opts.seed)];
  if (opts.preset) args.push('--preset', opts.preset);
  if (opts.layout) args.push('--layout', opts.layout);
  if (opts.op !== undefined) args.push('--op', String(opts.op));
  if (opts.opRange) args.push('--op-range', `${opts.opRange[0]}..${opts.opRange[1]}`);
  if (opts.reask) args.push('--reask');
  if (opts.noAnswer) args.push('--no-answer');
  if (opts.universe) args.push('--universe', opts.universe);
  return args;
}

export function augmentArgs(opts: AugmentOptions): string[] {
  if (!(opts.retryRate >= 0 && opts.retryRate < 1)) {
    // mirrors the primary component's validation message
    throw new RangeError(`retry_rate must lie in [0,1), got ${opts.retryRate}`);
  }
  const args = ['augment', '--mode', opts.mode, '--retry-rate', String(opts.retryRate),
                '--seed', String(opts.seed)];
  if (opts.mask === false) args.push('--mask', 'off');
  if (opts.wholeSentence) args.push('--whole-sentence');
  return args;
}

async function drain(records: Iterable<object> | AsyncIterable<object>): Promise<string> {
  const lines: string[] = [];
  for await (const record of records as AsyncIterable<object>) {
    lines.push(JSON.stringify(record));
  }
  return lines.join('\n') + (lines.length ? '\n' : '');
}

/** Raw JSONL lines from `gen`; byte-identical to the CLI's stdout lines. */
export function generateLines(opts: GenOptions): AsyncGenerator<string> {
  return cliLines(genArgs(opts));
}

/** Problem records from `gen`. */
export async function* generateIter(opts: GenOptions): AsyncGenerator<ProblemRecord> {
  for await (const line of generateLines(opts)) {
    yield JSON.parse(line) as ProblemRecord;
  }
}

/** Raw JSONL lines from `augment` over the given problem records. */
export async function* augmentLines(
  records: Iterable<ProblemRecord> | AsyncIterable<ProblemRecord>,
  opts: AugmentOptions,
): AsyncGenerator<string> {
  const stdin = await drain(records);
  yield* cliLines(augmentArgs(opts), stdin);
}

/** Augmented samples (retry / retry_weak / retry_miss) over problem records. */
export async function* augmentIter(
  records: Iterable<ProblemRecord> | AsyncIterable<ProblemRecord>,
  opts: AugmentOptions,
): AsyncGenerator<AugmentedRecord> {
  for await (const line of augmentLines(records, opts)) {
    yield JSON.parse(line) as AugmentedRecord;
  }
}

/** Verify a batch of records (gen or augment output); one report per record. */
export async function verifyBatch(
  records: Iterable<object> | AsyncIterable<object>,
  opts: VerifyOptions = {},
): Promise<VerifierReport[]> {
  const args = ['verify'];
  if (opts.tolerantRetry) args.push('--tolerant-retry');
  const stdin = await drain(records);
  const reports: VerifierReport[] = [];
  for await (const line of cliLines(args, stdin)) {
    reports.push(JSON.parse(line) as VerifierReport);
  }
  return reports;
}

/**
 * Pack records into training sequences and return the binary artifacts:
 * `data` is the little-endian u32 id file, `mask` its loss-mask sidecar.
 */
export async function packBytes(
  records: Iterable<object> | AsyncIterable<object>,
  opts: PackOptions,
): Promise<{ data: Buffer; mask: Buffer }> {
  if (!Number.isInteger(opts.contextLen) || opts.contextLen <= 0) {
    throw new RangeError(`context_len must be positive, got ${opts.contextLen}`);
  }
  const stdin = await drain(records);
  const dir = await mkdtemp(join(tmpdir(), 'gsmgen-'));
  const out = join(dir, 'packed.bin');
  try {
    await cliBuffer(['pack', '--context-len', String(opts.contextLen),
                     '--seed', String(opts.seed ?? 0), '--format', 'bin',
                     '--output', out], stdin);
    return { data: await readFile(out), mask: await readFile(out + '.mask') };
  } finally {
    await rm(dir, { recursive: true, force: true });
  }
}

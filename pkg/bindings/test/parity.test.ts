import { execFileSync } from 'node:child_process';
import { mkdtempSync, readFileSync, rmSync } from 'node:fs';
import { tmpdir } from 'node:os';
import { join } from 'node:path';

import { describe, expect, it } from 'vitest';

import {
  augmentIter, augmentLines, generateIter, generateLines, genArgs,
  packBytes, pythonBin, verifyBatch,
} from '../src/index.js';
import type { GenOptions, ProblemRecord } from '../src/index.js';

function cliRaw(args: string[], input?: string): Buffer {
  return execFileSync(pythonBin(), ['-m', 'gsmgen.cli', ...args], {
    input, maxBuffer: 1 << 28,
  });
}

async function collect<T>(iter: AsyncIterable<T>): Promise<T[]> {
  const out: T[] = [];
  for await (const item of iter) out.push(item);
  return out;
}

// fixed 3x3 matrix of (preset/layout, seed) pipelines
const CONFIGS: Array<Pick<GenOptions, 'preset' | 'layout' | 'op'>> = [
  { preset: 'med', layout: 'pq', op: 7 },
  { preset: 'med', layout: 'qp', op: 9 },
  { preset: 'hard', layout: 'pq', op: 21 },
];
const SEEDS = [1, 2, 3];

describe('bindings/CLI parity over the (preset, seed) matrix', () => {
  for (const config of CONFIGS) {
    for (const seed of SEEDS) {
      const label = `${config.preset}-${config.layout}-op${config.op}-seed${seed}`;
      const gen: GenOptions = { ...config, n: 3, seed };

      it(`gen lines are byte-identical [${label}]`, async () => {
        const direct = cliRaw(genArgs(gen)).toString('utf8');
        const lines = await collect(generateLines(gen));
        expect(lines.join('\n') + '\n').toBe(direct);
      });

      it(`pipeline records and bytes match [${label}]`, async () => {
        const problems = await collect(generateIter(gen));
        expect(problems).toHaveLength(3);
        const directGen = cliRaw(genArgs(gen)).toString('utf8');
        expect(problems).toEqual(directGen.trim().split('\n').map((l) => JSON.parse(l)));

        const augOpts = { mode: 'retry' as const, retryRate: 0.5, seed: seed + 10 };
        const augLines = await collect(augmentLines(problems, augOpts));
        const directAug = cliRaw(
          ['augment', '--mode', 'retry', '--retry-rate', '0.5', '--seed', String(seed + 10)],
          directGen,
        ).toString('utf8');
        expect(augLines.join('\n') + '\n').toBe(directAug);

        const samples = await collect(augmentIter(problems, augOpts));
        const reports = await verifyBatch(samples);
        const directReports = cliRaw(['verify'], directAug).toString('utf8')
          .trim().split('\n').map((l) => JSON.parse(l));
        expect(reports).toEqual(directReports);
        expect(reports.every((r) => r.fully_correct)).toBe(true);

        const packed = await packBytes(samples, { contextLen: 768, seed: 0 });
        const dir = mkdtempSync(join(tmpdir(), 'gsmgen-parity-'));
        try {
          const out = join(dir, 'direct.bin');
          cliRaw(['pack', '--context-len', '768', '--seed', '0',
                  '--format', 'bin', '--output', out], directAug);
          expect(packed.data.equals(readFileSync(out))).toBe(true);
          expect(packed.mask.equals(readFileSync(out + '.mask'))).toBe(true);
        } finally {
          rmSync(dir, { recursive: true, force: true });
        }
      });
    }
  }
});

describe('validation and error mapping', () => {
  it('rejects retry_rate outside [0,1) with the primary message', async () => {
    const problems: ProblemRecord[] = await collect(generateIter({ n: 1, seed: 0, op: 7 }));
    await expect(async () => {
      for await (const _ of augmentIter(problems, { mode: 'retry', retryRate: 1.5, seed: 0 })) {
        // unreachable
      }
    }).rejects.toThrow('retry_rate must lie in [0,1), got 1.5');
  });

  it('folds malformed records into failed reports, like the CLI', async () => {
    const reports = await verifyBatch([{ not: 'a record' }]);
    expect(reports).toHaveLength(1);
    expect(reports[0].fully_correct).toBe(false);
  });

  it('maps CLI failures to errors carrying the CLI message', async () => {
    await expect(collect(generateIter({ n: 1, seed: 0, op: 500 }))).rejects.toThrow(
      /unreachable/,
    );
  });

  it('validates pack options eagerly', async () => {
    await expect(packBytes([], { contextLen: 0 })).rejects.toThrow('context_len');
  });
});

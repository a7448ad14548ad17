import { spawn } from 'node:child_process';

/** Interpreter used to drive the CLI; override with GSMGEN_PYTHON. */
export function pythonBin(): string {
  return process.env.GSMGEN_PYTHON ?? 'python3';
}

export class CliError extends Error {
  constructor(message: string, readonly exitCode: number | null) {
    super(message);
    this.name = 'CliError';
  }
}

function start(args: string[], stdin?: string) {
  const child = spawn(pythonBin(), ['-m', 'gsmgen.cli', ...args], {
    stdio: ['pipe', 'pipe', 'pipe'],
  });
  if (stdin !== undefined) {
    child.stdin.write(stdin);
  }
  child.stdin.end();
  let stderr = '';
  child.stderr.setEncoding('utf8');
  child.stderr.on('data', (d: string) => {
    stderr += d;
  });
  const closed: Promise<number | null> = new Promise((resolve) =>
    child.on('close', resolve),
  );
  return { child, closed, stderr: () => stderr };
}

/**
 * Stream the CLI's stdout as raw JSONL lines. Lines are yielded verbatim
 * (no re-serialization), which is what keeps bindings output byte-identical
 * to direct CLI invocations. A nonzero exit becomes a CliError carrying the
 * CLI's own error message.
 */
export async function* cliLines(args: string[], stdin?: string): AsyncGenerator<string> {
  const { child, closed, stderr } = start(args, stdin);
  let buffer = '';
  for await (const chunk of child.stdout) {
    buffer += chunk.toString('utf8');
    let idx: number;
    while ((idx = buffer.indexOf('\n')) >= 0) {
      yield buffer.slice(0, idx);
      buffer = buffer.slice(idx + 1);
    }
  }
  const code = await closed;
  if (code !== 0) {
    throw new CliError(stderr().trim() || `gsmgen exited with code ${code}`, code);
  }
  if (buffer.length > 0) {
    yield buffer;
  }
}

/** Run the CLI to completion and return raw stdout bytes. */
export async function cliBuffer(args: string[], stdin?: string): Promise<Buffer> {
  const { child, closed, stderr } = start(args, stdin);
  const chunks: Buffer[] = [];
  for await (const chunk of child.stdout) {
    chunks.push(chunk as Buffer);
  }
  const code = await closed;
  if (code !== 0) {
    throw new CliError(stderr().trim() || `gsmgen exited with code ${code}`, code);
  }
  return Buffer.concat(chunks);
}

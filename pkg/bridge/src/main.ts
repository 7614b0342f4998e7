/**
 * Stdin/stdout entry point.
 *
 *   node dist/main.js [--backend ngram|neural] [--order N] [--delta D]
 *     [--weight-steps N] [--lambda-grid 0,0.1,0.3,0.5] [--dev-fraction F]
 *     [--max-passes N] [--epochs N] [--lr F] [--adapt-steps N]
 *
 * Defaults match the engine's builtin scorer so the round-trip fixture
 * reproduces in-process scores.
 */

import * as readline from "node:readline";
import { DEFAULT_OPTIONS, ScorerSession, type ScorerOptions } from "./server.js";

function parseArgs(argv: string[]): ScorerOptions {
  const options: ScorerOptions = {
    backend: DEFAULT_OPTIONS.backend,
    ngram: { ...DEFAULT_OPTIONS.ngram },
    neural: { ...DEFAULT_OPTIONS.neural },
  };
  for (let i = 0; i < argv.length; i++) {
    const flag = argv[i];
    const next = () => {
      i += 1;
      if (i >= argv.length) {
        throw new Error(`flag ${flag} needs a value`);
      }
      return argv[i];
    };
    switch (flag) {
      case "--backend": {
        const value = next();
        if (value !== "ngram" && value !== "neural") {
          throw new Error(`unknown backend ${value}`);
        }
        options.backend = value;
        break;
      }
      case "--order":
        options.ngram.order = Number(next());
        break;
      case "--delta":
        options.ngram.delta = Number(next());
        break;
      case "--weight-steps":
        options.ngram.weightSteps = Number(next());
        break;
      case "--lambda-grid":
        options.ngram.lambdaGrid = next().split(",").map(Number);
        break;
      case "--dev-fraction":
        options.ngram.devFraction = Number(next());
        break;
      case "--max-passes":
        options.ngram.maxPasses = Number(next());
        break;
      case "--epochs":
        options.neural.epochs = Number(next());
        break;
      case "--lr":
        options.neural.learningRate = Number(next());
        break;
      case "--adapt-steps":
        options.neural.adaptSteps = Number(next());
        break;
      default:
        throw new Error(`unknown flag ${flag}`);
    }
  }
  return options;
}

function main(): void {
  let options: ScorerOptions;
  try {
    options = parseArgs(process.argv.slice(2));
  } catch (error) {
    process.stderr.write(`${error instanceof Error ? error.message : error}\n`);
    process.exit(2);
  }
  const session = new ScorerSession(options);
  const rl = readline.createInterface({ input: process.stdin, terminal: false });
  rl.on("line", (line) => {
    const reply = session.handleLine(line);
    if (reply === null) {
      return;
    }
    process.stdout.write(reply.line + "\n");
    if (reply.close) {
      rl.close();
      process.exit(reply.exitCode ?? 0);
    }
  });
}

main();

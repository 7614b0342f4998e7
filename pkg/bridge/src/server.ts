/**
 * ced-scorer/1 session: one JSON object per line, requests answered
 * strictly in order. A malformed line gets exactly one error response and
 * the stream stays open; a failed handshake (missing or wrong-version
 * hello) is a protocol violation that closes the stream.
 */

import {
  DEFAULT_SETTINGS,
  NgramSettings,
  adaptText,
  crossEntropy,
  trainBaseTexts,
  type Model,
} from "./ngram.js";
import {
  DEFAULT_NEURAL,
  NeuralLM,
  NeuralSettings,
  adaptNeural,
  trainNeural,
} from "./neural.js";

export const PROTOCOL_VERSION = "ced-scorer/1";

export interface ScorerOptions {
  backend: "ngram" | "neural";
  ngram: NgramSettings;
  neural: NeuralSettings;
}

export const DEFAULT_OPTIONS: ScorerOptions = {
  backend: "ngram",
  ngram: DEFAULT_SETTINGS,
  neural: DEFAULT_NEURAL,
};

interface Reply {
  line: string;
  close: boolean;
  exitCode?: number;
}

function ok(payload: Record<string, unknown>): string {
  return JSON.stringify({ ok: true, ...payload });
}

function err(message: string): string {
  return JSON.stringify({ ok: false, error: message });
}

export class ScorerSession {
  private readonly options: ScorerOptions;
  private readonly ngramModels = new Map<string, Model>();
  private readonly neuralModels = new Map<string, NeuralLM>();
  private nextId = 0;
  private saidHello = false;

  constructor(options: ScorerOptions = DEFAULT_OPTIONS) {
    this.options = options;
  }

  private issueId(): string {
    return `m${this.nextId++}`;
  }

  handleLine(line: string): Reply | null {
    const trimmed = line.trim();
    if (!trimmed) {
      return null;
    }
    let request: Record<string, unknown>;
    try {
      request = JSON.parse(trimmed);
      if (typeof request !== "object" || request === null) {
        throw new Error("not an object");
      }
    } catch {
      return { line: err("malformed request line"), close: false };
    }
    const op = request["op"];
    if (!this.saidHello && op !== "hello") {
      return { line: err("hello handshake required first"), close: true, exitCode: 1 };
    }
    try {
      switch (op) {
        case "hello": {
          if (request["version"] !== PROTOCOL_VERSION) {
            return {
              line: err(`unsupported protocol version ${String(request["version"])}`),
              close: true,
              exitCode: 1,
            };
          }
          this.saidHello = true;
          return {
            line: ok({ version: PROTOCOL_VERSION, backend: this.options.backend }),
            close: false,
          };
        }
        case "shutdown":
          return { line: ok({}), close: true, exitCode: 0 };
        case "train_base": {
          const texts = asStringArray(request["texts"], "texts");
          const devTexts = asStringArray(request["dev_texts"] ?? [], "dev_texts");
          const id = this.issueId();
          if (this.options.backend === "ngram") {
            this.ngramModels.set(id, trainBaseTexts(texts, devTexts, this.options.ngram));
          } else {
            this.neuralModels.set(id, trainNeural(texts, this.options.neural));
          }
          return { line: ok({ model_id: id }), close: false };
        }
        case "adapt": {
          const text = asString(request["text"], "text");
          const modelId = asString(request["model_id"], "model_id");
          const id = this.issueId();
          if (this.options.backend === "ngram") {
            const base = this.ngramModels.get(modelId);
            if (base === undefined || !("weights" in base)) {
              return { line: err(`unknown base model id ${modelId}`), close: false };
            }
            this.ngramModels.set(id, adaptText(base, text, this.options.ngram));
          } else {
            const base = this.neuralModels.get(modelId);
            if (base === undefined) {
              return { line: err(`unknown base model id ${modelId}`), close: false };
            }
            this.neuralModels.set(id, adaptNeural(base, text, this.options.neural));
          }
          return { line: ok({ model_id: id }), close: false };
        }
        case "score": {
          const text = asString(request["text"], "text");
          const modelId = asString(request["model_id"], "model_id");
          if (this.options.backend === "ngram") {
            const model = this.ngramModels.get(modelId);
            if (model === undefined) {
              return { line: err(`unknown model id ${modelId}`), close: false };
            }
            const ids = model.vocab.encode(text);
            return {
              line: ok({ ce_per_token: crossEntropy(model, ids), token_count: ids.length - 1 }),
              close: false,
            };
          }
          const model = this.neuralModels.get(modelId);
          if (model === undefined) {
            return { line: err(`unknown model id ${modelId}`), close: false };
          }
          const ids = model.vocab.encode(text);
          return {
            line: ok({ ce_per_token: -model.meanLogLik(ids), token_count: ids.length - 1 }),
            close: false,
          };
        }
        default:
          return { line: err(`unknown op ${String(op)}`), close: false };
      }
    } catch (error) {
      return { line: err(error instanceof Error ? error.message : String(error)), close: false };
    }
  }
}

function asString(value: unknown, field: string): string {
  if (typeof value !== "string") {
    throw new Error(`field ${field} must be a string`);
  }
  return value;
}

function asStringArray(value: unknown, field: string): string[] {
  if (!Array.isArray(value) || value.some((v) => typeof v !== "string")) {
    throw new Error(`field ${field} must be an array of strings`);
  }
  return value as string[];
}

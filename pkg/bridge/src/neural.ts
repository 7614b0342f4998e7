/**
 * Small trainable neural language model: a bigram softmax over a V x V
 * logit table, trained by full-batch gradient ascent on mean
 * log-likelihood. Adaptation takes a handful of steps on one example's
 * text with backtracking on the step size and early stopping, so a
 * successfully adapted model is strictly better on its own example.
 * Everything is deterministic: no sampling anywhere.
 */

import { Vocabulary } from "./tokenizer.js";

export interface NeuralSettings {
  epochs: number;
  learningRate: number;
  adaptSteps: number;
}

export const DEFAULT_NEURAL: NeuralSettings = {
  epochs: 8,
  learningRate: 0.5,
  adaptSteps: 20,
};

export class NeuralLM {
  constructor(
    readonly vocab: Vocabulary,
    readonly theta: Float64Array, // row-major V x V logits, row = context id
  ) {}

  static zeros(vocab: Vocabulary): NeuralLM {
    return new NeuralLM(vocab, new Float64Array(vocab.size * vocab.size));
  }

  private logSoftmaxAt(ctx: number, target: number): number {
    const v = this.vocab.size;
    const row = ctx * v;
    let max = -Infinity;
    for (let j = 0; j < v; j++) {
      if (this.theta[row + j] > max) {
        max = this.theta[row + j];
      }
    }
    let denom = 0.0;
    for (let j = 0; j < v; j++) {
      denom += Math.exp(this.theta[row + j] - max);
    }
    return this.theta[row + target] - max - Math.log(denom);
  }

  meanLogLik(ids: number[]): number {
    if (ids.length < 2) {
      throw new Error("sequence must contain at least one predicted token");
    }
    let total = 0.0;
    for (let i = 1; i < ids.length; i++) {
      total += this.logSoftmaxAt(ids[i - 1], ids[i]);
    }
    return total / (ids.length - 1);
  }

  gradMeanLogLik(ids: number[]): Float64Array {
    const v = this.vocab.size;
    const g = new Float64Array(v * v);
    const n = ids.length - 1;
    for (let i = 1; i < ids.length; i++) {
      const ctx = ids[i - 1];
      const row = ctx * v;
      let max = -Infinity;
      for (let j = 0; j < v; j++) {
        if (this.theta[row + j] > max) {
          max = this.theta[row + j];
        }
      }
      let denom = 0.0;
      for (let j = 0; j < v; j++) {
        denom += Math.exp(this.theta[row + j] - max);
      }
      for (let j = 0; j < v; j++) {
        g[row + j] -= Math.exp(this.theta[row + j] - max) / denom / n;
      }
      g[row + ids[i]] += 1.0 / n;
    }
    return g;
  }

  stepped(grad: Float64Array, eta: number): NeuralLM {
    const theta = new Float64Array(this.theta);
    for (let i = 0; i < theta.length; i++) {
      theta[i] += eta * grad[i];
    }
    return new NeuralLM(this.vocab, theta);
  }
}

export function trainNeural(texts: string[], settings: NeuralSettings): NeuralLM {
  if (texts.length === 0) {
    throw new Error("no texts to train the base model on");
  }
  const vocab = Vocabulary.fromTexts(texts);
  let model = NeuralLM.zeros(vocab);
  const encoded = texts.map((t) => vocab.encode(t));
  for (let epoch = 0; epoch < settings.epochs; epoch++) {
    for (const ids of encoded) {
      model = model.stepped(model.gradMeanLogLik(ids), settings.learningRate);
    }
  }
  return model;
}

export function adaptNeural(
  base: NeuralLM,
  text: string,
  settings: NeuralSettings,
): NeuralLM {
  const ids = base.vocab.encode(text);
  let model = base;
  for (let step = 0; step < settings.adaptSteps; step++) {
    const before = model.meanLogLik(ids);
    const grad = model.gradMeanLogLik(ids);
    let eta = settings.learningRate;
    let improved: NeuralLM | null = null;
    for (let tries = 0; tries < 10; tries++) {
      const candidate = model.stepped(grad, eta);
      if (candidate.meanLogLik(ids) > before) {
        improved = candidate;
        break;
      }
      eta /= 2;
    }
    if (improved === null) {
      break; // early stop: no step size improves the held-in text
    }
    model = improved;
  }
  return model;
}

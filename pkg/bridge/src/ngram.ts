/**
 * Interpolated additive-smoothed n-gram models, an operation-for-operation
 * mirror of the engine's builtin scorer. Every probability is computed in
 * the same order (per-order smoothing, then a left-to-right weighted sum,
 * then the base/empirical mixture), so cross-entropies agree with the
 * in-process path up to accumulated log() rounding, far below 1e-9.
 */

import { BOS_ID, Vocabulary } from "./tokenizer.js";

export interface NgramSettings {
  order: number;
  delta: number;
  weightSteps: number;
  lambdaGrid: number[];
  devFraction: number;
  maxPasses: number;
}

export const DEFAULT_SETTINGS: NgramSettings = {
  order: 3,
  delta: 0.1,
  weightSteps: 10,
  lambdaGrid: [0.0, 0.1, 0.3, 0.5],
  devFraction: 1.0,
  maxPasses: 20,
};

export class NgramCounts {
  readonly order: number;
  // index k-1: context key (ids joined by space) -> token id -> count
  readonly grams: Array<Map<string, Map<number, number>>>;
  readonly totals: Array<Map<string, number>>;

  constructor(order: number) {
    this.order = order;
    this.grams = Array.from({ length: order }, () => new Map());
    this.totals = Array.from({ length: order }, () => new Map());
  }

  addSequence(ids: number[]): void {
    const padded = new Array<number>(this.order - 1).fill(BOS_ID).concat(ids);
    for (let i = this.order; i < padded.length; i++) {
      const w = padded[i];
      for (let k = 1; k <= this.order; k++) {
        const key = padded.slice(i - k + 1, i).join(" ");
        let byCtx = this.grams[k - 1].get(key);
        if (byCtx === undefined) {
          byCtx = new Map();
          this.grams[k - 1].set(key, byCtx);
        }
        byCtx.set(w, (byCtx.get(w) ?? 0) + 1);
        this.totals[k - 1].set(key, (this.totals[k - 1].get(key) ?? 0) + 1);
      }
    }
  }
}

function orderProb(
  counts: NgramCounts,
  k: number,
  key: string,
  w: number,
  delta: number,
  vsize: number,
): number {
  const byCtx = counts.grams[k - 1].get(key);
  const c = byCtx?.get(w) ?? 0;
  const t = counts.totals[k - 1].get(key) ?? 0;
  return (c + delta) / (t + delta * vsize);
}

export class BaseModel {
  constructor(
    readonly vocab: Vocabulary,
    readonly order: number,
    readonly delta: number,
    readonly weights: number[],
    readonly counts: NgramCounts,
  ) {}

  pad(ids: number[]): number[] {
    return new Array<number>(this.order - 1).fill(BOS_ID).concat(ids);
  }

  probAt(padded: number[], i: number): number {
    const w = padded[i];
    const vsize = this.vocab.size;
    let p = 0.0;
    for (let k = 1; k <= this.order; k++) {
      const key = padded.slice(i - k + 1, i).join(" ");
      p += this.weights[k - 1] * orderProb(this.counts, k, key, w, this.delta, vsize);
    }
    return p;
  }
}

export class TargetModel {
  constructor(
    readonly base: BaseModel,
    readonly lam: number,
    readonly counts: NgramCounts,
  ) {}

  get vocab(): Vocabulary {
    return this.base.vocab;
  }

  get order(): number {
    return this.base.order;
  }

  pad(ids: number[]): number[] {
    return this.base.pad(ids);
  }

  empiricalProbAt(padded: number[], i: number): number {
    const w = padded[i];
    const base = this.base;
    const vsize = base.vocab.size;
    let p = 0.0;
    for (let k = 1; k <= base.order; k++) {
      const key = padded.slice(i - k + 1, i).join(" ");
      p += base.weights[k - 1] * orderProb(this.counts, k, key, w, base.delta, vsize);
    }
    return p;
  }

  probAt(padded: number[], i: number): number {
    const pb = this.base.probAt(padded, i);
    if (this.lam === 0.0) {
      return pb;
    }
    return (1.0 - this.lam) * pb + this.lam * this.empiricalProbAt(padded, i);
  }
}

export type Model = BaseModel | TargetModel;

export function crossEntropy(model: Model, ids: number[]): number {
  if (ids.length < 2) {
    throw new Error("sequence must contain at least one predicted token");
  }
  const padded = model.pad(ids);
  let sum = 0.0;
  let n = 0;
  for (let i = model.order; i < padded.length; i++) {
    sum += Math.log(model.probAt(padded, i));
    n += 1;
  }
  return -sum / n;
}

function* compositions(remaining: number, parts: number): Generator<number[]> {
  if (parts === 1) {
    yield [remaining];
    return;
  }
  for (let head = 0; head <= remaining; head++) {
    for (const rest of compositions(remaining - head, parts - 1)) {
      yield [head, ...rest];
    }
  }
}

function tuneWeights(
  counts: NgramCounts,
  vsize: number,
  order: number,
  delta: number,
  devIds: number[][],
  steps: number,
): number[] {
  const perPosition: number[][] = [];
  for (const ids of devIds) {
    const padded = new Array<number>(order - 1).fill(BOS_ID).concat(ids);
    for (let i = order; i < padded.length; i++) {
      const w = padded[i];
      const probs: number[] = [];
      for (let k = 1; k <= order; k++) {
        const key = padded.slice(i - k + 1, i).join(" ");
        probs.push(orderProb(counts, k, key, w, delta, vsize));
      }
      perPosition.push(probs);
    }
  }
  if (perPosition.length === 0) {
    return new Array<number>(order).fill(1.0 / order);
  }
  let bestWeights: number[] | null = null;
  let bestLl = -Infinity;
  for (const combo of compositions(steps, order)) {
    const weights = combo.map((part) => part / steps);
    let ll = 0.0;
    for (const probs of perPosition) {
      let p = 0.0;
      for (let k = 0; k < order; k++) {
        p += weights[k] * probs[k];
      }
      ll += Math.log(p);
    }
    if (ll > bestLl) {
      bestLl = ll;
      bestWeights = weights;
    }
  }
  return bestWeights as number[];
}

export function trainBaseTexts(
  texts: string[],
  devTexts: string[],
  settings: NgramSettings,
): BaseModel {
  if (texts.length === 0) {
    throw new Error("no texts to train the base model on");
  }
  const vocab = Vocabulary.fromTexts(texts);
  const counts = new NgramCounts(settings.order);
  for (const text of texts) {
    counts.addSequence(vocab.encode(text));
  }
  const devIds = devTexts.map((t) => vocab.encode(t));
  const weights =
    devIds.length > 0
      ? tuneWeights(counts, vocab.size, settings.order, settings.delta, devIds, settings.weightSteps)
      : new Array<number>(settings.order).fill(1.0 / settings.order);
  return new BaseModel(vocab, settings.order, settings.delta, weights, counts);
}

export function adaptText(
  base: BaseModel,
  text: string,
  settings: NgramSettings,
): TargetModel {
  if (!text) {
    throw new Error("adaptation example renders to empty text");
  }
  const counts = new NgramCounts(base.order);
  const ids = base.vocab.encode(text);
  counts.addSequence(ids);
  const probe = new TargetModel(base, 0.0, counts);

  const baseProbs: number[] = [];
  const empProbs: number[] = [];
  const padded = base.pad(ids);
  for (let i = base.order; i < padded.length; i++) {
    baseProbs.push(base.probAt(padded, i));
    empProbs.push(probe.empiricalProbAt(padded, i));
  }
  const heldIn = Math.max(1, Math.ceil(settings.devFraction * baseProbs.length));
  const pb = baseProbs.slice(0, heldIn);
  const pe = empProbs.slice(0, heldIn);

  let bestLam = 0.0;
  let bestLl = 0.0;
  for (const p of pb) {
    bestLl += Math.log(p);
  }
  let passes = 1;
  for (const lam of settings.lambdaGrid) {
    if (lam === 0.0 || passes >= settings.maxPasses) {
      continue;
    }
    passes += 1;
    let ll = 0.0;
    for (let i = 0; i < pb.length; i++) {
      ll += Math.log((1.0 - lam) * pb[i] + lam * pe[i]);
    }
    if (ll > bestLl) {
      bestLl = ll;
      bestLam = lam;
    }
  }
  return new TargetModel(base, bestLam, counts);
}

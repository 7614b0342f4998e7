/**
 * Word/punctuation tokenizer matching the engine's tokenizer exactly:
 * lowercased alphanumeric runs or single punctuation characters, wrapped
 * in BOS/EOS sentinels. Vocabulary ids are assigned in sorted order after
 * the three reserved entries, so two independent builds over the same
 * texts agree id for id.
 */

export const UNK = "<unk>";
export const BOS = "<s>";
export const EOS = "</s>";

export const UNK_ID = 0;
export const BOS_ID = 1;
export const EOS_ID = 2;

const TOKEN_RE = /[a-z0-9_]+|[^a-z0-9_\s]/gi;

export function tokenize(text: string): string[] {
  const body = text.match(TOKEN_RE) ?? [];
  return [BOS, ...body.map((t) => t.toLowerCase()), EOS];
}

export class Vocabulary {
  readonly tokens: string[];
  private readonly index: Map<string, number>;

  constructor(words: Iterable<string>) {
    const reserved = new Set([UNK, BOS, EOS]);
    const rest = [...new Set(words)].filter((w) => !reserved.has(w)).sort();
    this.tokens = [UNK, BOS, EOS, ...rest];
    this.index = new Map(this.tokens.map((t, i) => [t, i]));
  }

  static fromTexts(texts: Iterable<string>): Vocabulary {
    const words = new Set<string>();
    for (const text of texts) {
      const toks = tokenize(text);
      for (let i = 1; i < toks.length - 1; i++) {
        words.add(toks[i]);
      }
    }
    return new Vocabulary(words);
  }

  get size(): number {
    return this.tokens.length;
  }

  encode(text: string): number[] {
    return tokenize(text).map((t) => this.index.get(t) ?? UNK_ID);
  }
}

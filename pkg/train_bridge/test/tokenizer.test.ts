import { describe, expect, it } from "vitest";

import { loadDataset } from "../src/loader.js";
import { BOS, BpeTokenizer, EOS, PAD, UNK } from "../src/tokenizer.js";

const DATASET = "fixtures/dataset.jsonl";

describe("BpeTokenizer", () => {
  it("round-trips fixture lines", () => {
    const { sequences } = loadDataset(DATASET);
    const texts = sequences.map((s) => s.text);
    const tok = BpeTokenizer.train(texts, 384);
    for (const text of texts.slice(0, 200)) {
      const ids = tok.encode(text);
      expect(tok.decode(ids)).toBe(text.split(/\s+/).join(" "));
    }
  });

  it("respects the vocab budget and reserves specials", () => {
    const { sequences } = loadDataset(DATASET);
    const tok = BpeTokenizer.train(sequences.map((s) => s.text), 384);
    expect(tok.size).toBeLessThanOrEqual(384);
    expect(tok.inverse[PAD]).toBe("<pad>");
    expect(tok.inverse[BOS]).toBe("<bos>");
    expect(tok.inverse[EOS]).toBe("<eos>");
    expect(tok.inverse[UNK]).toBe("<unk>");
  });

  it("marks sequence boundaries on request", () => {
    const tok = BpeTokenizer.train(["you want the ball now."], 64);
    const ids = tok.encode("you want the ball now.", { bos: true, eos: true });
    expect(ids[0]).toBe(BOS);
    expect(ids[ids.length - 1]).toBe(EOS);
  });

  it("trains deterministically", () => {
    const { sequences } = loadDataset(DATASET);
    const texts = sequences.map((s) => s.text);
    const a = BpeTokenizer.train(texts, 256);
    const b = BpeTokenizer.train(texts, 256);
    expect(JSON.stringify(a.toJSON())).toBe(JSON.stringify(b.toJSON()));
  });

  it("survives JSON round trip", () => {
    const tok = BpeTokenizer.train(["we hold the teddy there."], 64);
    const back = BpeTokenizer.fromJSON(JSON.parse(JSON.stringify(tok.toJSON())));
    const text = "we hold the teddy there.";
    expect(back.encode(text)).toEqual(tok.encode(text));
  });

  it("maps unseen characters to UNK", () => {
    const tok = BpeTokenizer.train(["you want the ball."], 64);
    const ids = tok.encode("zebra");
    expect(ids).toContain(UNK);
  });
});

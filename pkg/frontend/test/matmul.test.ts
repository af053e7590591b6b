import { describe, expect, it } from "vitest";

import {
  fillSmallIntegers,
  fillUnitInterval,
  matmulReference,
  maxRelativeError,
  mulberry32,
} from "../src/matmul";

describe("mulberry32", () => {
  it("is deterministic per seed and stays in [0, 1)", () => {
    const a = mulberry32(123);
    const b = mulberry32(123);
    const c = mulberry32(124);
    const seqA = Array.from({ length: 50 }, () => a());
    const seqB = Array.from({ length: 50 }, () => b());
    const seqC = Array.from({ length: 50 }, () => c());
    expect(seqA).toEqual(seqB);
    expect(seqA).not.toEqual(seqC);
    for (const v of seqA) {
      expect(v).toBeGreaterThanOrEqual(0);
      expect(v).toBeLessThan(1);
    }
  });
});

describe("fill helpers", () => {
  it("small integers are integers in [-8, 8] and cover both signs", () => {
    const out = new Float64Array(500);
    fillSmallIntegers(out, 9);
    let sawNeg = false;
    let sawPos = false;
    for (const v of out) {
      expect(Number.isInteger(v)).toBe(true);
      expect(Math.abs(v)).toBeLessThanOrEqual(8);
      sawNeg ||= v < 0;
      sawPos ||= v > 0;
    }
    expect(sawNeg).toBe(true);
    expect(sawPos).toBe(true);
  });

  it("unit-interval values stay inside [0.25, 1)", () => {
    const out = new Float32Array(500);
    fillUnitInterval(out, 3);
    for (const v of out) {
      expect(v).toBeGreaterThanOrEqual(0.25);
      expect(v).toBeLessThan(1);
    }
  });

  it("same seed gives the same data, for either dtype width", () => {
    const x = new Float64Array(64);
    const y = new Float64Array(64);
    fillSmallIntegers(x, 42);
    fillSmallIntegers(y, 42);
    expect(Array.from(x)).toEqual(Array.from(y));
  });
});

describe("matmulReference", () => {
  it("matches a hand-computed 2x2 (column-major)", () => {
    // A = [[1, 3], [2, 4]], B = [[5, 7], [6, 8]] in math notation.
    const a = Float64Array.from([1, 2, 3, 4]);
    const b = Float64Array.from([5, 6, 7, 8]);
    const c = matmulReference(2, 2, 2, a, 2, b, 2);
    expect(Array.from(c)).toEqual([23, 34, 31, 46]);
  });

  it("honours leading-dimension slack in A and B", () => {
    // Same numbers as above but stored with lda = 3, ldb = 4.
    const a = Float64Array.from([1, 2, 99, 3, 4, 99]);
    const b = Float64Array.from([5, 6, 99, 99, 7, 8, 99, 99]);
    const c = matmulReference(2, 2, 2, a, 3, b, 4);
    expect(Array.from(c)).toEqual([23, 34, 31, 46]);
  });
});

describe("maxRelativeError", () => {
  it("is zero for identical arrays, including zeros", () => {
    expect(maxRelativeError([0, 1.5, -2], [0, 1.5, -2])).toBe(0);
  });

  it("measures the worst element", () => {
    expect(maxRelativeError([1, 2.2], [1, 2])).toBeCloseTo(0.1, 12);
  });

  it("reports Infinity against a zero reference", () => {
    expect(maxRelativeError([1e-30], [0])).toBe(Infinity);
  });

  it("rejects mismatched lengths", () => {
    expect(() => maxRelativeError([1], [1, 2])).toThrow(/length mismatch/);
  });
});

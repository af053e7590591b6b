/**
 * Plain-JavaScript matrix helpers: deterministic data generation, a
 * straightforward float64 reference multiply, and error measurement.
 * Matrices are dense column-major, matching the Fortran GEMM contract.
 */

/** Small deterministic PRNG (mulberry32); returns values in [0, 1). */
export function mulberry32(seed: number): () => number {
  let s = seed >>> 0;
  return () => {
    s = (s + 0x6d2b79f5) >>> 0;
    let t = s;
    t = Math.imul(t ^ (t >>> 15), t | 1);
    t ^= t + Math.imul(t ^ (t >>> 7), t | 61);
    return ((t ^ (t >>> 14)) >>> 0) / 4294967296;
  };
}

/** Fill with integers in [-8, 8]: exactly representable in every format
 * the kernels use, so a correct multiply has no rounding anywhere. */
export function fillSmallIntegers(
  out: Float32Array | Float64Array,
  seed: number,
): void {
  const next = mulberry32(seed);
  for (let i = 0; i < out.length; i++) {
    out[i] = Math.floor(next() * 17) - 8;
  }
}

/** Fill with values in [0.25, 1): positive and within one binade-ish
 * band, so relative error of a sum is bounded by the per-term casts. */
export function fillUnitInterval(
  out: Float32Array | Float64Array,
  seed: number,
): void {
  const next = mulberry32(seed);
  for (let i = 0; i < out.length; i++) {
    out[i] = 0.25 + 0.75 * next();
  }
}

/**
 * Reference C = A·B in float64, column-major, no transposes.
 * A is m×k with leading dimension lda, B is k×n with ldb; the result is
 * dense m×n (leading dimension m).
 */
export function matmulReference(
  m: number,
  n: number,
  k: number,
  a: ArrayLike<number>,
  lda: number,
  b: ArrayLike<number>,
  ldb: number,
): Float64Array {
  const c = new Float64Array(m * n);
  for (let j = 0; j < n; j++) {
    for (let i = 0; i < m; i++) {
      let s = 0;
      for (let p = 0; p < k; p++) {
        s += (a[p * lda + i] as number) * (b[j * ldb + p] as number);
      }
      c[j * m + i] = s;
    }
  }
  return c;
}

/**
 * Largest element-wise relative error |got - ref| / |ref|.
 * Agreeing zeros contribute 0; a nonzero against a zero reference is
 * reported as Infinity.
 */
export function maxRelativeError(
  got: ArrayLike<number>,
  ref: ArrayLike<number>,
): number {
  if (got.length !== ref.length) {
    throw new Error(`length mismatch: ${got.length} vs ${ref.length}`);
  }
  let worst = 0;
  for (let i = 0; i < got.length; i++) {
    const g = got[i] as number;
    const r = ref[i] as number;
    if (g === r) {
      continue;
    }
    const denom = Math.abs(r);
    worst = Math.max(worst, denom === 0 ? Infinity : Math.abs(g - r) / denom);
  }
  return worst;
}

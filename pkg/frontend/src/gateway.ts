/**
 * FFI bindings for the tamm gateway shared library.
 *
 * This module is deliberately the only place that knows anything about
 * the kernel provider: everything it uses is the classic BLAS surface
 * (`sgemm_` / `dgemm_`, Fortran convention) plus three small helpers the
 * library exports for reporting (`tamm_config_report`, `tamm_last_error`,
 * `tamm_gateway_ping`).  Swapping in any other library with the same
 * symbols requires no change here beyond the loader path.
 */

import koffi, { LibraryHandle } from "koffi";
import { existsSync } from "node:fs";
import * as path from "node:path";

/** The requested shared library does not exist or cannot be loaded. */
export class GatewayLibraryNotFoundError extends Error {}

/** The library loaded, but a required symbol is absent. */
export class GatewaySymbolMissingError extends Error {}

/** A gateway call reported a failure (see message for detail). */
export class GatewayCallError extends Error {}

/** Directory containing this package (dist/ sibling of scenarios/). */
export function frontendRoot(): string {
  if (typeof __dirname !== "undefined") {
    return path.resolve(__dirname, "..");
  }
  return process.cwd();
}

/** Where to look for the library, in order. */
export function libraryCandidates(): string[] {
  const fromEnv = process.env.TAMM_GATEWAY_LIB;
  if (fromEnv) {
    return [fromEnv];
  }
  const root = frontendRoot();
  return [
    path.resolve(root, "..", "build", "libtammgw.so"),
    path.resolve(process.cwd(), "build", "libtammgw.so"),
  ];
}

export interface Gateway {
  /** Path the library was loaded from. */
  readonly libraryPath: string;
  /** Liveness check; the library answers 42. */
  ping(): number;
  /** Resolved kernel configuration descriptor. */
  configReport(): string;
  /** Message for the most recent failure ("" after a clean call). */
  lastError(): string;
  /** Fortran-convention single precision GEMM (column-major). */
  sgemm(
    transA: string,
    transB: string,
    m: number,
    n: number,
    k: number,
    alpha: number,
    a: Float32Array,
    lda: number,
    b: Float32Array,
    ldb: number,
    beta: number,
    c: Float32Array,
    ldc: number,
  ): void;
  /** Fortran-convention double precision GEMM (column-major). */
  dgemm(
    transA: string,
    transB: string,
    m: number,
    n: number,
    k: number,
    alpha: number,
    a: Float64Array,
    lda: number,
    b: Float64Array,
    ldb: number,
    beta: number,
    c: Float64Array,
    ldc: number,
  ): void;
  /** CBLAS-convention single precision GEMM returning a status code:
   * 0 ok, 1-based parameter index for argument errors, -1 otherwise. */
  cblasSgemm(
    layout: number,
    transA: number,
    transB: number,
    m: number,
    n: number,
    k: number,
    alpha: number,
    a: Float32Array | null,
    lda: number,
    b: Float32Array | null,
    ldb: number,
    beta: number,
    c: Float32Array | null,
    ldc: number,
  ): number;
}

type NativeFn = (...args: unknown[]) => unknown;

const i32 = (v: number) => new Int32Array([v]);
const f32 = (v: number) => new Float32Array([v]);
const f64 = (v: number) => new Float64Array([v]);

/**
 * Load the gateway library and bind its symbols.
 *
 * @param libPath explicit library path; defaults to `TAMM_GATEWAY_LIB`,
 *   then `../build/libtammgw.so` relative to this package, then
 *   `./build/libtammgw.so` under the working directory.
 */
export function loadGateway(libPath?: string): Gateway {
  const candidates = libPath ? [libPath] : libraryCandidates();
  const found = candidates.find((p) => existsSync(p));
  if (!found) {
    throw new GatewayLibraryNotFoundError(
      `library not found: tried ${candidates.join(", ")}`,
    );
  }

  let lib: LibraryHandle;
  try {
    lib = koffi.load(found);
  } catch (err) {
    throw new GatewayLibraryNotFoundError(
      `library not loadable: ${found}: ${(err as Error).message}`,
    );
  }

  const bind = (name: string, signature: string): NativeFn => {
    try {
      return lib.func(signature) as unknown as NativeFn;
    } catch {
      throw new GatewaySymbolMissingError(`symbol missing: ${name} in ${found}`);
    }
  };

  const rawPing = bind("tamm_gateway_ping", "int tamm_gateway_ping()");
  const rawReport = bind(
    "tamm_config_report",
    "int tamm_config_report(_Out_ uint8_t *buf, int cap)",
  );
  const rawLastError = bind(
    "tamm_last_error",
    "int tamm_last_error(_Out_ uint8_t *buf, int cap)",
  );
  const rawSgemm = bind(
    "sgemm_",
    "void sgemm_(const char *transa, const char *transb, const int32_t *m, " +
      "const int32_t *n, const int32_t *k, const float *alpha, " +
      "const float *a, const int32_t *lda, const float *b, " +
      "const int32_t *ldb, const float *beta, float *c, const int32_t *ldc)",
  );
  const rawDgemm = bind(
    "dgemm_",
    "void dgemm_(const char *transa, const char *transb, const int32_t *m, " +
      "const int32_t *n, const int32_t *k, const double *alpha, " +
      "const double *a, const int32_t *lda, const double *b, " +
      "const int32_t *ldb, const double *beta, double *c, const int32_t *ldc)",
  );
  const rawCblasSgemm = bind(
    "tamm_cblas_sgemm",
    "int tamm_cblas_sgemm(int layout, int transa, int transb, int m, int n, " +
      "int k, float alpha, const float *a, int lda, const float *b, int ldb, " +
      "float beta, float *c, int ldc)",
  );

  const readText = (fn: NativeFn, label: string): string => {
    const buf = Buffer.alloc(4096);
    const rc = fn(buf, buf.length) as number;
    if (rc < 0) {
      const errBuf = Buffer.alloc(4096);
      const len = rawLastError(errBuf, errBuf.length) as number;
      throw new GatewayCallError(
        `${label} failed: ${errBuf.toString("utf8", 0, Math.max(len, 0))}`,
      );
    }
    return buf.toString("utf8", 0, rc);
  };

  return {
    libraryPath: found,
    ping: () => rawPing() as number,
    configReport: () => readText(rawReport, "tamm_config_report"),
    lastError: () => readText(rawLastError, "tamm_last_error"),
    sgemm: (transA, transB, m, n, k, alpha, a, lda, b, ldb, beta, c, ldc) => {
      rawSgemm(transA, transB, i32(m), i32(n), i32(k), f32(alpha), a, i32(lda),
               b, i32(ldb), f32(beta), c, i32(ldc));
    },
    dgemm: (transA, transB, m, n, k, alpha, a, lda, b, ldb, beta, c, ldc) => {
      rawDgemm(transA, transB, i32(m), i32(n), i32(k), f64(alpha), a, i32(lda),
               b, i32(ldb), f64(beta), c, i32(ldc));
    },
    cblasSgemm: (layout, transA, transB, m, n, k, alpha, a, lda, b, ldb, beta, c, ldc) =>
      rawCblasSgemm(layout, transA, transB, m, n, k, alpha, a, lda, b, ldb, beta, c, ldc) as number,
  };
}

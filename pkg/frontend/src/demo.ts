/**
 * Run one GEMM scenario against the gateway library and print a
 * one-line JSON verdict.  Exit code 0 on pass, 1 on failure.
 *
 * The scenario is chosen by name (argv) or by matching `TAMM_CONFIG`
 * against the known scenario configuration files.  The numeric client
 * code below is identical for every scenario — only the configuration
 * the environment points at changes what the kernel does.
 */

import {
  GatewayCallError,
  GatewayLibraryNotFoundError,
  GatewaySymbolMissingError,
  loadGateway,
} from "./gateway";
import {
  fillSmallIntegers,
  fillUnitInterval,
  matmulReference,
  maxRelativeError,
} from "./matmul";
import {
  DemoScenario,
  SCENARIOS,
  configPathFor,
  findScenario,
  scenarioForConfigPath,
} from "./scenarios";

export interface Verdict {
  scenario: string;
  dims: [number, number, number];
  dtype: string;
  kernel: string;
  maxRelError: number | string;
  bound: number;
  pass: boolean;
  error?: string;
}

export function runScenario(scenario: DemoScenario): Verdict {
  const { m, n, k } = scenario;
  const alloc = scenario.dtype === "float64"
    ? (len: number) => new Float64Array(len)
    : (len: number) => new Float32Array(len);
  const a = alloc(m * k);
  const b = alloc(k * n);
  const c = alloc(m * n);
  const fill = scenario.data === "small-integers" ? fillSmallIntegers : fillUnitInterval;
  fill(a, scenario.seed);
  fill(b, scenario.seed + 1);

  const gw = loadGateway();
  if (scenario.dtype === "float64") {
    gw.dgemm("N", "N", m, n, k, 1.0, a as Float64Array, m,
             b as Float64Array, k, 0.0, c as Float64Array, m);
  } else {
    gw.sgemm("N", "N", m, n, k, 1.0, a as Float32Array, m,
             b as Float32Array, k, 0.0, c as Float32Array, m);
  }
  const callError = gw.lastError();
  const kernel = gw.configReport();

  const ref = matmulReference(m, n, k, a, m, b, k);
  const rel = maxRelativeError(c, ref);

  const problems: string[] = [];
  if (callError !== "") {
    problems.push(`gemm reported: ${callError}`);
  }
  if (kernel !== scenario.expectDescriptor) {
    problems.push(`kernel is ${kernel}, expected ${scenario.expectDescriptor}`);
  }
  if (!(rel <= scenario.errorBound)) {
    problems.push(`max relative error ${rel} exceeds bound ${scenario.errorBound}`);
  }
  if (scenario.expectNonzeroError && !(rel > 0)) {
    problems.push("expected the cast effects to be measurable, but the error is zero");
  }

  const verdict: Verdict = {
    scenario: scenario.name,
    dims: [m, n, k],
    dtype: scenario.dtype,
    kernel,
    maxRelError: Number.isFinite(rel) ? rel : String(rel),
    bound: scenario.errorBound,
    pass: problems.length === 0,
  };
  if (problems.length > 0) {
    verdict.error = problems.join("; ");
  }
  return verdict;
}

function failureVerdict(name: string, message: string): Verdict {
  return {
    scenario: name,
    dims: [0, 0, 0],
    dtype: "",
    kernel: "",
    maxRelError: "",
    bound: 0,
    pass: false,
    error: message,
  };
}

export function main(argv: string[] = process.argv.slice(2)): number {
  let scenario: DemoScenario | undefined;
  const name = argv[0];
  if (name !== undefined) {
    scenario = findScenario(name);
    if (!scenario) {
      const known = SCENARIOS.map((s) => s.name).join(", ");
      console.log(JSON.stringify(failureVerdict(name, `unknown scenario; known: ${known}`)));
      return 1;
    }
    if (!process.env.TAMM_CONFIG) {
      // Must happen before the first gateway call: the embedded
      // interpreter reads its environment once, at startup.
      process.env.TAMM_CONFIG = configPathFor(scenario);
    }
  } else if (process.env.TAMM_CONFIG) {
    scenario = scenarioForConfigPath(process.env.TAMM_CONFIG);
    if (!scenario) {
      console.log(JSON.stringify(failureVerdict(
        "unresolved",
        `TAMM_CONFIG=${process.env.TAMM_CONFIG} does not match any scenario configuration`,
      )));
      return 1;
    }
  } else {
    const known = SCENARIOS.map((s) => s.name).join(", ");
    console.log(JSON.stringify(failureVerdict(
      "unresolved",
      `pick a scenario by argument or TAMM_CONFIG; known: ${known}`,
    )));
    return 1;
  }

  let verdict: Verdict;
  try {
    verdict = runScenario(scenario);
  } catch (err) {
    const detail =
      err instanceof GatewayLibraryNotFoundError
        || err instanceof GatewaySymbolMissingError
        || err instanceof GatewayCallError
        ? err.message
        : `${err}`;
    verdict = failureVerdict(scenario.name, detail);
  }
  console.log(JSON.stringify(verdict));
  return verdict.pass ? 0 : 1;
}

if (require.main === module) {
  process.exitCode = main();
}

/**
 * Demo scenarios.  Each one is the same client code path (demo.ts) under
 * a different kernel configuration file; nothing but `TAMM_CONFIG`
 * changes between runs.
 */

import * as path from "node:path";
import { frontendRoot } from "./gateway";

export interface DemoScenario {
  name: string;
  description: string;
  /** Configuration file under scenarios/, selected via TAMM_CONFIG. */
  configFile: string;
  /** Kernel descriptor the gateway must report back. */
  expectDescriptor: string;
  m: number;
  n: number;
  k: number;
  dtype: "float32" | "float64";
  data: "small-integers" | "unit-interval";
  seed: number;
  /** Inclusive ceiling on the max relative error; 0 demands exactness. */
  errorBound: number;
  /** When true, a zero error is itself a failure (the configuration is
   * expected to perturb random data, and measuring nothing would mean
   * the kernel was not actually exercised). */
  expectNonzeroError: boolean;
}

export const SCENARIOS: DemoScenario[] = [
  {
    name: "wide-window",
    description:
      "64x64x64 double precision with integer entries through a wide " +
      "accumulation window: every product and sum is captured exactly, " +
      "so the result must match the float64 reference bit for bit",
    configFile: "wide-window.cfg",
    expectDescriptor: "ieee:8:23/acc:9:30:-48/8x8/functional",
    m: 64,
    n: 64,
    k: 64,
    dtype: "float64",
    data: "small-integers",
    seed: 42,
    errorBound: 0,
    expectNonzeroError: false,
  },
  {
    name: "bfloat16-systolic",
    description:
      "24x16x20 single precision routed through a bfloat16 systolic " +
      "array: casting the operands to an 8-bit significand perturbs " +
      "random data, but accumulation stays exact, so the error is " +
      "nonzero yet bounded by the casts",
    configFile: "bfloat16-systolic.cfg",
    expectDescriptor: "bfloat16/acc:8:10:-30/4x4/systolic",
    m: 24,
    n: 16,
    k: 20,
    dtype: "float32",
    data: "unit-interval",
    seed: 7,
    errorBound: 2 ** -5,
    expectNonzeroError: true,
  },
  {
    name: "scalar-exact",
    description:
      "1x1x1 double precision with full-width operands: a single exact " +
      "product rounded once is precisely what a native multiply does, " +
      "so the result must equal a*b computed in JavaScript",
    configFile: "scalar-exact.cfg",
    expectDescriptor: "ieee:11:52/acc:4:120:-140/2x2/functional",
    m: 1,
    n: 1,
    k: 1,
    dtype: "float64",
    data: "unit-interval",
    seed: 11,
    errorBound: 0,
    expectNonzeroError: false,
  },
];

export function scenariosDir(): string {
  return path.resolve(frontendRoot(), "scenarios");
}

export function configPathFor(scenario: DemoScenario): string {
  return path.resolve(scenariosDir(), scenario.configFile);
}

export function findScenario(name: string): DemoScenario | undefined {
  return SCENARIOS.find((s) => s.name === name);
}

/** Match a TAMM_CONFIG path back to the scenario that owns it. */
export function scenarioForConfigPath(cfgPath: string): DemoScenario | undefined {
  const resolved = path.resolve(cfgPath);
  return SCENARIOS.find((s) => configPathFor(s) === resolved)
    ?? SCENARIOS.find((s) => s.configFile === path.basename(resolved));
}

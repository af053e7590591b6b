/**
 * Run every scenario, one child process each, varying nothing between
 * runs except the `TAMM_CONFIG` the child sees.  A fresh process per
 * scenario is required, not a nicety: the gateway's embedded
 * interpreter reads its environment once, on first use.
 */

import { spawnSync } from "node:child_process";
import * as path from "node:path";
import { frontendRoot } from "./gateway";
import { SCENARIOS, configPathFor } from "./scenarios";

function main(): number {
  const demoJs = path.resolve(frontendRoot(), "dist", "demo.js");
  let failures = 0;
  for (const scenario of SCENARIOS) {
    const result = spawnSync(process.execPath, [demoJs, scenario.name], {
      env: { ...process.env, TAMM_CONFIG: configPathFor(scenario) },
      encoding: "utf8",
    });
    process.stdout.write(result.stdout ?? "");
    process.stderr.write(result.stderr ?? "");
    if (result.status !== 0) {
      failures += 1;
    }
  }
  if (failures === 0) {
    console.error(`all ${SCENARIOS.length} scenarios passed`);
    return 0;
  }
  console.error(`${failures} of ${SCENARIOS.length} scenarios failed`);
  return 1;
}

process.exitCode = main();

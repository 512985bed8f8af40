// End-to-end equivalence: a scripted 100-outcome session driven through the
// UI's API client finalises to exactly the library's (best, second, pi).
//
// The Python engine produces the script (allocation-consistent responses and
// the expected final result); the test then replays it against a live
// service instance through ConductClient.

import { spawn, spawnSync } from 'node:child_process';
import { afterAll, beforeAll, describe, expect, it } from 'vitest';

import { ConductClient } from '../src/api.js';

const PORT = 8765;
const BASE = `http://127.0.0.1:${PORT}`;

interface Fixture {
  seed: number;
  responses: number[];
  allocations: number[];
  best: number;
  second: number;
  pi: number;
}

const FIXTURE_SCRIPT = `
import json
import numpy as np
from targetrial import rng as rngmod
from targetrial.engine import Scenario, TrialConfig, simulate_trial
from targetrial.policies import PolicySpec

scen = Scenario.univariate([1.91, -3.36, -0.37, 3.99], [2, 2, 2, 4], 0.0)
cfg = TrialConfig(100, PolicySpec.we_sym(1, 0.55, burn_in=5), seed=424242)
out = simulate_trial(scen, cfg)
z, _ = rngmod.trial_streams(cfg.seed, 0, 100, 1)
responses = scen.means[out.allocations] + scen.sigmas[out.allocations] * z[:, 0]
print(json.dumps({
    "seed": cfg.seed,
    "responses": [float(x) for x in responses],
    "allocations": [int(a) for a in out.allocations],
    "best": out.best, "second": out.second, "pi": out.pi,
}))
`;

let server: ReturnType<typeof spawn> | null = null;

async function waitForService(): Promise<void> {
  for (let i = 0; i < 100; i++) {
    try {
      const res = await fetch(`${BASE}/v1/sessions/none`);
      if (res.status === 404) return;
    } catch {
      // not up yet
    }
    await new Promise((r) => setTimeout(r, 150));
  }
  throw new Error('conduct service did not come up');
}

function libraryFixture(): Fixture {
  const proc = spawnSync('python3', ['-c', FIXTURE_SCRIPT], { encoding: 'utf8' });
  if (proc.status !== 0) throw new Error(`fixture generation failed: ${proc.stderr}`);
  return JSON.parse(proc.stdout) as Fixture;
}

beforeAll(async () => {
  server = spawn('python3', [
    '-c',
    [
      'import tempfile, uvicorn',
      'from targetrial.service import create_app',
      `app = create_app(log_path=tempfile.mktemp(suffix=".jsonl"))`,
      `uvicorn.run(app, host="127.0.0.1", port=${PORT}, log_level="error")`,
    ].join('\n'),
  ], { stdio: 'ignore' });
  await waitForService();
}, 30_000);

afterAll(() => {
  server?.kill();
});

describe('service replay equivalence', () => {
  it('finalises to the identical (best, second, pi) as the library path', async () => {
    const fixture = libraryFixture();
    const client = new ConductClient(BASE);
    const { id } = await client.createSession({
      n_arms: 4,
      n_patients: 100,
      burn_in: 5,
      targets: [0, 0, 0, 0],
      sigmas: [2, 2, 2, 4],
      policy: { kind: 'we_sym', p: 1, kappa: 0.55 },
      seed: fixture.seed,
    });

    for (let t = 0; t < 100; t++) {
      const rec = await client.getRecommendation(id);
      expect(rec.patient).toBe(t + 1);
      expect(rec.arm).toBe(fixture.allocations[t]);
      const view = await client.postOutcome(id, rec.arm, fixture.responses[t], t + 1);
      expect(view.patients_recorded).toBe(t + 1);
    }

    const final = await client.finalize(id, 0.95);
    expect(final.best).toBe(fixture.best);
    expect(final.second).toBe(fixture.second);
    expect(final.pi).toBe(fixture.pi);
  }, 120_000);

  it('rejects duplicate patient indices through the client', async () => {
    const client = new ConductClient(BASE);
    const { id } = await client.createSession({
      n_arms: 2, n_patients: 4, burn_in: 1, targets: [0, 0], sigmas: [1, 1],
      policy: { kind: 'we_sym', p: 2, kappa: 1 }, seed: 9,
    });
    const rec = await client.getRecommendation(id);
    await client.postOutcome(id, rec.arm, 0.5, 1);
    await expect(client.postOutcome(id, rec.arm, 0.5, 1)).rejects.toThrowError(/already recorded/);
  });
});

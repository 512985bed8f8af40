// New-session wizard: step model and validation for trial setup.
//
// Pure state + validation logic, kept out of the DOM so it can be tested
// directly; app.ts renders it.

import type { CreateSessionRequest, PolicyBody } from './api.js';

export interface WizardState {
  nArms: number;
  nPatients: number;
  burnIn: number;
  targets: number[];
  sigmaKnown: boolean;
  sigmas: number[];
  policyKind: PolicyBody['kind'];
  p: number;
  kappa: number;
  a: number;
  b: number;
  seed: number;
}

// Defaults mirror the four-arm phase-II setting the engine documents:
// 100 patients, burn-in 5 per arm, symmetric gain with p=2, kappa=1.1.
export function defaultWizard(): WizardState {
  return {
    nArms: 4,
    nPatients: 100,
    burnIn: 5,
    targets: [0, 0, 0, 0],
    sigmaKnown: true,
    sigmas: [2, 2, 2, 4],
    policyKind: 'we_sym',
    p: 2,
    kappa: 1.1,
    a: 2.0,
    b: 1.0,
    seed: Math.floor(Date.now() % 1_000_000),
  };
}

export function resizeArms(state: WizardState, nArms: number): WizardState {
  const clamp = Math.max(2, Math.floor(nArms));
  const take = <T,>(xs: T[], fill: T): T[] =>
    Array.from({ length: clamp }, (_, i) => (i < xs.length ? xs[i] : fill));
  return {
    ...state,
    nArms: clamp,
    targets: take(state.targets, state.targets[state.targets.length - 1] ?? 0),
    sigmas: take(state.sigmas, state.sigmas[state.sigmas.length - 1] ?? 1),
  };
}

export function validateWizard(state: WizardState): string[] {
  const errors: string[] = [];
  if (state.nArms < 2) errors.push('at least two arms are required');
  if (!Number.isInteger(state.nPatients) || state.nPatients < 1)
    errors.push('total patients must be a positive integer');
  if (!Number.isInteger(state.burnIn) || state.burnIn < 1)
    errors.push('burn-in must be a positive integer');
  if (!state.sigmaKnown && state.burnIn < 2)
    errors.push('unknown variances require a burn-in of at least 2 per arm');
  if (state.nPatients < state.nArms * state.burnIn)
    errors.push(`total patients cannot cover the burn-in (${state.nArms} x ${state.burnIn})`);
  if (state.targets.length !== state.nArms) errors.push('one target per arm is required');
  if (state.targets.some((t) => !Number.isFinite(t))) errors.push('targets must be finite numbers');
  if (state.sigmaKnown) {
    if (state.sigmas.length !== state.nArms) errors.push('one sigma per arm is required');
    if (state.sigmas.some((s) => !(s > 0))) errors.push('sigmas must be positive');
  }
  if (state.policyKind === 'we_sym' || state.policyKind === 'we_asym') {
    if (!(state.kappa >= 0.5)) errors.push('kappa must be at least 0.5');
  }
  if (state.policyKind === 'we_asym' && !(state.a > 0 && state.b > 0))
    errors.push('asymmetry parameters must be positive');
  return errors;
}

export function toCreateRequest(state: WizardState): CreateSessionRequest {
  const policy: PolicyBody = { kind: state.policyKind };
  if (state.policyKind === 'we_sym') {
    policy.p = state.p;
    policy.kappa = state.kappa;
  } else if (state.policyKind === 'we_asym') {
    policy.a = state.a;
    policy.b = state.b;
    policy.kappa = state.kappa;
  }
  return {
    n_arms: state.nArms,
    n_patients: state.nPatients,
    burn_in: state.burnIn,
    targets: [...state.targets],
    sigmas: state.sigmaKnown ? [...state.sigmas] : null,
    policy,
    seed: state.seed,
  };
}

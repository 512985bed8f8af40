import { describe, expect, it } from 'vitest';

import { defaultWizard, resizeArms, toCreateRequest, validateWizard } from '../src/wizard.js';

describe('wizard defaults', () => {
  it('pre-fills the four-arm phase-II setting', () => {
    const w = defaultWizard();
    expect(w.nArms).toBe(4);
    expect(w.nPatients).toBe(100);
    expect(w.burnIn).toBe(5);
    expect(w.policyKind).toBe('we_sym');
    expect(w.p).toBe(2);
    expect(w.kappa).toBe(1.1);
    expect(validateWizard(w)).toEqual([]);
  });
});

describe('validation', () => {
  it('rejects a burn-in the trial cannot cover', () => {
    const w = { ...defaultWizard(), nPatients: 10, burnIn: 5 };
    expect(validateWizard(w).join(' ')).toContain('cannot cover');
  });

  it('requires burn-in of two when sds are estimated', () => {
    const w = { ...defaultWizard(), sigmaKnown: false, burnIn: 1 };
    expect(validateWizard(w).join(' ')).toContain('at least 2');
  });

  it('enforces the kappa floor', () => {
    const w = { ...defaultWizard(), kappa: 0.3 };
    expect(validateWizard(w).join(' ')).toContain('kappa');
  });

  it('requires positive sigmas when known', () => {
    const w = defaultWizard();
    w.sigmas[1] = 0;
    expect(validateWizard(w).join(' ')).toContain('positive');
  });
});

describe('arm resizing', () => {
  it('extends per-arm vectors with the last value', () => {
    const w = resizeArms(defaultWizard(), 6);
    expect(w.targets).toHaveLength(6);
    expect(w.sigmas).toEqual([2, 2, 2, 4, 4, 4]);
  });

  it('truncates when shrinking', () => {
    const w = resizeArms(defaultWizard(), 2);
    expect(w.sigmas).toEqual([2, 2]);
  });
});

describe('request mapping', () => {
  it('passes known sigmas and symmetric-gain parameters through', () => {
    const req = toCreateRequest(defaultWizard());
    expect(req.sigmas).toEqual([2, 2, 2, 4]);
    expect(req.policy).toEqual({ kind: 'we_sym', p: 2, kappa: 1.1 });
  });

  it('maps unknown sds to null', () => {
    const req = toCreateRequest({ ...defaultWizard(), sigmaKnown: false, burnIn: 5 });
    expect(req.sigmas).toBeNull();
  });
});

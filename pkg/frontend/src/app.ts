// Dashboard wiring: one active session per tab, strictly server-acknowledged
// state (no optimistic updates, no client-side statistics).

import { ApiError, ConductClient, Recommendation, SessionView } from './api.js';
import { formatValue, gainBars } from './gains.js';
import { defaultWizard, resizeArms, toCreateRequest, validateWizard, WizardState } from './wizard.js';

type Phase = 'setup' | 'running' | 'complete';

interface AppState {
  phase: Phase;
  wizard: WizardState;
  sessionId: string | null;
  view: SessionView | null;
  recommendation: Recommendation | null;
  error: string | null;
  retry: (() => Promise<void>) | null;
  eta: number;
}

const client = new ConductClient('');
const state: AppState = {
  phase: 'setup',
  wizard: defaultWizard(),
  sessionId: null,
  view: null,
  recommendation: null,
  error: null,
  retry: null,
  eta: 0.95,
};

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K, attrs: Record<string, string> = {}, ...children: (Node | string)[]
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  for (const [k, v] of Object.entries(attrs)) {
    if (k === 'class') node.className = v;
    else node.setAttribute(k, v);
  }
  node.append(...children);
  return node;
}

async function guard(op: () => Promise<void>): Promise<void> {
  try {
    state.error = null;
    state.retry = null;
    await op();
  } catch (err) {
    state.error = err instanceof ApiError ? err.message : String(err);
    state.retry = () => guard(op);
  }
  render();
}

async function refresh(): Promise<void> {
  if (!state.sessionId) return;
  state.view = await client.getState(state.sessionId);
  if (state.view.final) {
    state.phase = 'complete';
    state.recommendation = null;
  } else if (state.view.patients_recorded < (state.wizard.nPatients ?? 0)) {
    state.recommendation = await client.getRecommendation(state.sessionId);
  } else {
    state.recommendation = null;
  }
}

// ---------------------------------------------------------------- wizard --
function renderWizard(root: HTMLElement): void {
  const w = state.wizard;
  const errors = validateWizard(w);
  const form = el('section', { class: 'panel wizard' },
    el('h2', {}, 'New trial session'));

  const numberField = (label: string, value: number, step: string,
                       onchange: (v: number) => void) => {
    const input = el('input', { type: 'number', value: String(value), step });
    input.addEventListener('change', () => { onchange(Number(input.value)); render(); });
    return el('label', { class: 'field' }, label, input);
  };

  form.append(
    numberField('Arms (K)', w.nArms, '1', (v) => { state.wizard = resizeArms(w, v); }),
    numberField('Total patients (N)', w.nPatients, '1', (v) => { w.nPatients = Math.floor(v); }),
    numberField('Burn-in per arm (B)', w.burnIn, '1', (v) => { w.burnIn = Math.floor(v); }),
    numberField('Seed', w.seed, '1', (v) => { w.seed = Math.floor(v); }),
  );

  const perArm = el('div', { class: 'per-arm' });
  for (let j = 0; j < w.nArms; j++) {
    const target = el('input', { type: 'number', value: String(w.targets[j]), step: 'any' });
    target.addEventListener('change', () => { w.targets[j] = Number(target.value); });
    const row = el('div', { class: 'arm-row' }, `arm ${j + 1}`,
      el('label', {}, 'target ', target));
    if (w.sigmaKnown) {
      const sigma = el('input', { type: 'number', value: String(w.sigmas[j]), step: 'any' });
      sigma.addEventListener('change', () => { w.sigmas[j] = Number(sigma.value); });
      row.append(el('label', {}, 'sd ', sigma));
    }
    perArm.append(row);
  }
  form.append(perArm);

  const knownToggle = el('input', { type: 'checkbox' });
  (knownToggle as HTMLInputElement).checked = w.sigmaKnown;
  knownToggle.addEventListener('change', () => {
    w.sigmaKnown = (knownToggle as HTMLInputElement).checked;
    render();
  });
  form.append(el('label', { class: 'field' }, 'response sds known ', knownToggle));

  const policy = el('select', {});
  for (const [kind, label] of [
    ['we_sym', 'information gain (symmetric)'],
    ['we_asym', 'information gain (asymmetric)'],
    ['cb', 'current belief'],
    ['fr', 'fixed randomisation'],
    ['ts', 'posterior probability of best'],
  ] as const) {
    const opt = el('option', { value: kind }, label);
    if (kind === w.policyKind) opt.setAttribute('selected', '');
    policy.append(opt);
  }
  policy.addEventListener('change', () => {
    w.policyKind = (policy as HTMLSelectElement).value as WizardState['policyKind'];
    render();
  });
  form.append(el('label', { class: 'field' }, 'allocation rule ', policy));

  if (w.policyKind === 'we_sym') {
    form.append(
      numberField('variance impact p', w.p, 'any', (v) => { w.p = v; }),
      numberField('exploration penalty kappa', w.kappa, 'any', (v) => { w.kappa = v; }),
    );
  } else if (w.policyKind === 'we_asym') {
    form.append(
      numberField('left width a', w.a, 'any', (v) => { w.a = v; }),
      numberField('right width b', w.b, 'any', (v) => { w.b = v; }),
      numberField('exploration penalty kappa', w.kappa, 'any', (v) => { w.kappa = v; }),
    );
  }

  if (errors.length) {
    form.append(el('ul', { class: 'errors' },
      ...errors.map((e) => el('li', {}, e))));
  }
  const start = el('button', {}, 'Start session') as HTMLButtonElement;
  start.disabled = errors.length > 0;
  start.addEventListener('click', () => guard(async () => {
    const created = await client.createSession(toCreateRequest(w));
    state.sessionId = created.id;
    state.phase = 'running';
    await refresh();
  }));
  form.append(start);
  root.append(form);
}

// --------------------------------------------------------------- running --
function renderRunning(root: HTMLElement): void {
  const view = state.view;
  if (!view) return;
  const rec = state.recommendation;
  const n = (view.config as { n_patients: number }).n_patients;
  const done = view.patients_recorded;

  const header = el('section', { class: 'panel' },
    el('h2', {}, `Session ${view.id.slice(0, 8)}`),
    el('p', {}, `phase: ${view.phase} — patient ${Math.min(done + 1, n)} of ${n} ` +
      `(${done} recorded)`));
  root.append(header);

  if (rec) {
    const panel = el('section', { class: 'panel recommendation' },
      el('h3', {}, 'Next allocation'),
      el('p', { class: 'arm-banner' }, `Treat patient ${rec.patient} on `,
        el('strong', {}, `arm ${rec.arm + 1}`)),
    );
    const value = el('input', { type: 'number', step: 'any', placeholder: 'observed response' });
    const submit = el('button', {}, 'Record outcome') as HTMLButtonElement;
    submit.addEventListener('click', () => guard(async () => {
      const v = Number((value as HTMLInputElement).value);
      if (!Number.isFinite(v)) throw new Error('enter a finite response value');
      await client.postOutcome(state.sessionId!, rec.arm, v, rec.patient);
      await refresh();
    }));
    panel.append(el('div', { class: 'entry' }, value, submit));
    root.append(panel);
  }

  const gains = el('section', { class: 'panel gains' }, el('h3', {}, 'Information gain by arm'));
  const bars = gainBars(view.arms.map((a) => a.gain), rec ? rec.arm : -1);
  if (bars.length === 0) {
    gains.append(el('p', { class: 'muted' },
      'gains appear once every arm has burn-in data'));
  } else {
    for (const bar of bars) {
      const fill = el('div', { class: bar.recommended ? 'bar fill best' : 'bar fill' });
      fill.style.width = `${(bar.width * 100).toFixed(1)}%`;
      gains.append(el('div', { class: 'bar-row' },
        el('span', { class: 'bar-label' }, bar.label),
        el('div', { class: 'bar-track' }, fill),
        el('span', { class: 'bar-value' }, formatValue(bar.value))));
    }
  }
  root.append(gains);

  const table = el('table', { class: 'arms' },
    el('tr', {}, el('th', {}, 'arm'), el('th', {}, 'n'), el('th', {}, 'mean')));
  for (const a of view.arms) {
    table.append(el('tr', {},
      el('td', {}, `arm ${a.arm + 1}`),
      el('td', {}, String(a.n)),
      el('td', {}, a.mean === null ? '—' : a.mean.toFixed(3))));
  }
  root.append(el('section', { class: 'panel' }, el('h3', {}, 'Arm states'), table));

  const finalize = el('section', { class: 'panel finalize' }, el('h3', {}, 'Finalise'));
  const eta = el('input', { type: 'number', step: 'any', value: String(state.eta) });
  eta.addEventListener('change', () => { state.eta = Number((eta as HTMLInputElement).value); });
  const button = el('button', {}, 'Finalise trial') as HTMLButtonElement;
  button.disabled = done < n;   // entering the Nth outcome enables this
  button.addEventListener('click', () => guard(async () => {
    await client.finalize(state.sessionId!, state.eta);
    await refresh();
  }));
  finalize.append(el('label', { class: 'field' }, 'cut-off probability ', eta), button,
    done < n ? el('p', { class: 'muted' }, `${n - done} outcomes remaining`) : '');
  root.append(finalize);
}

// -------------------------------------------------------------- complete --
function renderComplete(root: HTMLElement): void {
  const final = state.view?.final;
  if (!final) return;
  const banner = final.reject
    ? el('div', { class: 'banner reject' },
        `Superiority claimed: arm ${final.best + 1} over arm ${final.second + 1}`)
    : el('div', { class: 'banner retain' },
        'No superiority claim: the best-vs-second-best comparison is inconclusive');
  root.append(el('section', { class: 'panel result' },
    el('h2', {}, 'Final selection'),
    banner,
    el('p', {}, `best arm: ${final.best + 1}, second best: ${final.second + 1}`),
    el('p', {}, `posterior superiority ${final.pi.toFixed(4)} vs cut-off ${final.eta}`)));
}

function render(): void {
  const root = document.getElementById('app');
  if (!root) return;
  root.replaceChildren();
  if (state.error) {
    const retry = el('button', {}, 'Retry') as HTMLButtonElement;
    if (state.retry) retry.addEventListener('click', () => { void state.retry!(); });
    root.append(el('div', { class: 'banner error' },
      `service error: ${state.error} `, retry));
  }
  if (state.phase === 'setup') renderWizard(root);
  else if (state.phase === 'running') renderRunning(root);
  else renderComplete(root);
}

document.addEventListener('DOMContentLoaded', render);

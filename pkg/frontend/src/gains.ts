// Gains panel: scale server-reported per-arm scores into bar geometry.
//
// Scores arrive from the service verbatim; this module only maps them onto
// [0, 1] bar widths (no statistics happen client-side).

export interface Bar {
  arm: number;
  label: string;
  width: number;        // 0..1
  value: number | null;
  recommended: boolean;
}

export function gainBars(gains: (number | null)[] | null, recommended: number): Bar[] {
  if (!gains) return [];
  const defined = gains.filter((g): g is number => g !== null && Number.isFinite(g));
  if (defined.length === 0) return [];
  const max = Math.max(...defined);
  const min = Math.min(...defined);
  const span = max - min;
  return gains.map((g, arm) => ({
    arm,
    label: `arm ${arm + 1}`,
    value: g,
    width:
      g === null || !Number.isFinite(g)
        ? 0
        : span === 0
          ? 1
          : 0.05 + 0.95 * ((g - min) / span),
    recommended: arm === recommended,
  }));
}

export function formatValue(x: number | null, digits = 4): string {
  if (x === null || !Number.isFinite(x)) return '—';
  return x.toFixed(digits);
}

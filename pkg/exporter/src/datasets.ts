import { readFileSync } from "node:fs";

import { LABEL_CLASS, LABEL_REAL, type LabelKind } from "./featureFile.js";

export interface DatasetPoint {
  values: number[];
  label: number;
}

export interface Dataset {
  dim: number;
  numClasses: number;
  labelKind: LabelKind;
  /** Points in their on-disk / generated stream order, never shuffled. */
  points(): Generator<DatasetPoint>;
}

/** Deterministic 32-bit PRNG; same seed, same stream on every platform. */
export function mulberry32(seed: number): () => number {
  let a = seed >>> 0;
  return () => {
    a = (a + 0x6d2b79f5) >>> 0;
    let t = a;
    t = Math.imul(t ^ (t >>> 15), t | 1);
    t ^= t + Math.imul(t ^ (t >>> 7), t | 61);
    return ((t ^ (t >>> 14)) >>> 0) / 4294967296;
  };
}

export function normalSampler(seed: number): () => number {
  const uniform = mulberry32(seed);
  let spare: number | null = null;
  return () => {
    if (spare !== null) {
      const v = spare;
      spare = null;
      return v;
    }
    const r = Math.sqrt(-2 * Math.log(1 - uniform()));
    const theta = 2 * Math.PI * uniform();
    spare = r * Math.sin(theta);
    return r * Math.cos(theta);
  };
}

export interface SyntheticSpec {
  count: number;
  dim: number;
  numClasses: number;
  seed: number;
}

/**
 * Clustered class points: one Gaussian center per class, labels cycling
 * round-robin so every prefix of the stream covers all classes.
 */
export function syntheticDataset(spec: SyntheticSpec): Dataset {
  const { count, dim, numClasses, seed } = spec;
  if (count < 1 || dim < 1 || numClasses < 1) {
    throw new Error(`invalid synthetic spec ${count}x${dim}, ${numClasses} classes`);
  }
  return {
    dim,
    numClasses,
    labelKind: LABEL_CLASS,
    *points() {
      const normal = normalSampler(seed);
      const centers: number[][] = [];
      for (let k = 0; k < numClasses; k++) {
        centers.push(Array.from({ length: dim }, () => 2 * normal()));
      }
      for (let i = 0; i < count; i++) {
        const label = i % numClasses;
        const center = centers[label];
        const values = center.map(c => c + 0.5 * normal());
        yield { values, label };
      }
    },
  };
}

function parseSyntheticId(id: string): SyntheticSpec {
  // synthetic[:count[:dim[:classes[:seed]]]]
  const parts = id.split(":");
  const nums = parts.slice(1).map(p => Number(p));
  if (nums.some(n => !Number.isInteger(n))) {
    throw new Error(`bad synthetic dataset id '${id}', expected synthetic:count:dim:classes:seed`);
  }
  const [count = 64, dim = 8, numClasses = 4, seed = 0] = nums;
  return { count, dim, numClasses, seed };
}

export interface CsvOptions {
  labelKind?: LabelKind;
  /** explicit label-name -> class-id mapping; otherwise first-seen order */
  labelMap?: Record<string, number>;
}

/**
 * CSV with feature columns and the label in the last column. Rows keep
 * file order. Class labels may be names; they are resolved through the
 * mapping (explicit or built first-seen, which is deterministic for a
 * given file).
 *
 * Labels and row shapes are validated up front because the output
 * header needs (dim, K) before any record is written; feature cells are
 * parsed lazily, so a bad cell surfaces mid-export where the writer's
 * cleanup handles it.
 */
export function csvDataset(path: string, opts: CsvOptions = {}): Dataset {
  const labelKind = opts.labelKind ?? LABEL_CLASS;
  const lines = readFileSync(path, "utf-8")
    .split(/\r?\n/)
    .filter(line => line.trim() !== "");
  if (lines.length === 0) {
    throw new Error(`${path}: empty file`);
  }
  let start = 0;
  // header iff a feature column is non-numeric; the label column may
  // legitimately hold class names in data rows
  const firstCells = lines[0].split(",");
  if (
    firstCells
      .slice(0, -1)
      .some(cell => cell.trim() !== "" && Number.isNaN(Number(cell)))
  ) {
    start = 1;
  }
  if (start >= lines.length) {
    throw new Error(`${path}: no data rows`);
  }
  const dim = lines[start].split(",").length - 1;
  if (dim < 1) {
    throw new Error(`${path}: rows need at least one feature column and a label`);
  }

  const mapping = new Map<string, number>(Object.entries(opts.labelMap ?? {}));
  const explicit = mapping.size > 0;
  const rows: { cells: string[]; lineno: number; label: number }[] = [];
  for (let i = start; i < lines.length; i++) {
    const cells = lines[i].split(",");
    if (cells.length !== dim + 1) {
      throw new Error(`${path}:${i + 1}: expected ${dim + 1} columns, got ${cells.length}`);
    }
    const raw = cells[dim].trim();
    let label: number;
    if (labelKind === LABEL_REAL) {
      label = Number(raw);
      if (Number.isNaN(label)) {
        throw new Error(`${path}:${i + 1}: bad real label '${raw}'`);
      }
    } else if (mapping.has(raw)) {
      label = mapping.get(raw)!;
    } else if (!explicit && /^\d+$/.test(raw)) {
      label = Number(raw);
    } else if (!explicit) {
      label = mapping.size;
      mapping.set(raw, label);
    } else {
      throw new Error(`${path}:${i + 1}: label '${raw}' missing from the label map`);
    }
    rows.push({ cells, lineno: i + 1, label });
  }

  let numClasses = 1;
  if (labelKind === LABEL_CLASS) {
    const top = Math.max(...rows.map(r => r.label), ...mapping.values(), 0);
    numClasses = top + 1;
  }
  return {
    dim,
    numClasses,
    labelKind,
    *points() {
      for (const row of rows) {
        const values = row.cells.slice(0, dim).map(cell => {
          const v = Number(cell);
          if (Number.isNaN(v)) {
            throw new Error(`${path}:${row.lineno}: bad feature value '${cell}'`);
          }
          return v;
        });
        yield { values, label: row.label };
      }
    },
  };
}

export function resolveDataset(id: string, opts: CsvOptions = {}): Dataset {
  if (id === "synthetic" || id.startsWith("synthetic:")) {
    return syntheticDataset(parseSyntheticId(id));
  }
  if (id.endsWith(".csv")) {
    return csvDataset(id, opts);
  }
  throw new Error(`cannot resolve dataset '${id}' (use synthetic:... or a .csv path)`);
}

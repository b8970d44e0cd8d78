import { normalSampler } from "./datasets.js";

/**
 * A frozen feature map applied batch-wise. No state changes between
 * batches, so the same rows always produce the same features.
 */
export interface Backbone {
  name: string;
  outputDim(inputDim: number): number;
  apply(batch: number[][]): number[][];
}

export function identityBackbone(): Backbone {
  return {
    name: "identity",
    outputDim: dim => dim,
    apply: batch => batch,
  };
}

/**
 * Seeded Gaussian random projection to `outDim` features, scaled by
 * 1/sqrt(inputDim). A stand-in for a real embedding model: fixed,
 * deterministic, and changes the output dimensionality.
 */
export function projectionBackbone(outDim: number, seed: number): Backbone {
  if (!Number.isInteger(outDim) || outDim < 1) {
    throw new Error(`projection outDim must be a positive integer, got ${outDim}`);
  }
  let matrix: number[][] | null = null;
  let inDim = 0;
  const ensureMatrix = (inputDim: number) => {
    if (matrix === null) {
      const normal = normalSampler(seed);
      const scale = 1 / Math.sqrt(inputDim);
      matrix = Array.from({ length: outDim }, () =>
        Array.from({ length: inputDim }, () => scale * normal()),
      );
      inDim = inputDim;
    } else if (inputDim !== inDim) {
      throw new Error(`projection built for dim ${inDim}, got batch of dim ${inputDim}`);
    }
    return matrix;
  };
  return {
    name: `project:${outDim}:${seed}`,
    outputDim: () => outDim,
    apply: batch => {
      if (batch.length === 0) {
        return [];
      }
      const mat = ensureMatrix(batch[0].length);
      return batch.map(row =>
        mat.map(weights => weights.reduce((acc, w, j) => acc + w * row[j], 0)),
      );
    },
  };
}

export function resolveBackbone(id: string): Backbone {
  if (id === "identity") {
    return identityBackbone();
  }
  if (id.startsWith("project:")) {
    const parts = id.split(":");
    const outDim = Number(parts[1]);
    const seed = Number(parts[2] ?? 0);
    if (!Number.isInteger(outDim) || !Number.isInteger(seed)) {
      throw new Error(`bad backbone id '${id}', expected project:outDim:seed`);
    }
    return projectionBackbone(outDim, seed);
  }
  throw new Error(`cannot resolve backbone '${id}' (use identity or project:outDim:seed)`);
}

import { resolveBackbone } from "./backbone.js";
import { resolveDataset } from "./datasets.js";
import {
  FeatureFileWriter,
  LABEL_CLASS,
  LABEL_REAL,
  type LabelKind,
} from "./featureFile.js";

export interface ExportJob {
  dataset: string;
  /** default: "identity" */
  backbone?: string;
  /** default: 64 */
  batchSize?: number;
  out: string;
  /** stop after this many records */
  maxRecords?: number;
  /** class-name -> id mapping for CSV labels */
  labelMap?: Record<string, number>;
  /** default: "class" */
  labelKind?: "class" | "real";
}

export interface ExportSummary {
  path: string;
  records: number;
  dim: number;
  numClasses: number;
  labelKind: LabelKind;
  backbone: string;
}

/**
 * Run every dataset point through the backbone and write the results.
 *
 * Records keep the dataset's stream order: the scoring protocol on the
 * consuming side is order-sensitive, so nothing here may shuffle. On
 * any failure the partial output file is removed before rethrowing.
 */
export function runExport(job: ExportJob): ExportSummary {
  const labelKind: LabelKind = job.labelKind === "real" ? LABEL_REAL : LABEL_CLASS;
  const batchSize = job.batchSize ?? 64;
  if (!Number.isInteger(batchSize) || batchSize < 1) {
    throw new Error(`batchSize must be a positive integer, got ${batchSize}`);
  }
  if (job.maxRecords !== undefined && (!Number.isInteger(job.maxRecords) || job.maxRecords < 1)) {
    throw new Error(`maxRecords must be a positive integer, got ${job.maxRecords}`);
  }

  const dataset = resolveDataset(job.dataset, { labelKind, labelMap: job.labelMap });
  const backbone = resolveBackbone(job.backbone ?? "identity");
  const writer = new FeatureFileWriter(job.out, {
    dim: backbone.outputDim(dataset.dim),
    numClasses: dataset.numClasses,
    labelKind: dataset.labelKind,
  });

  try {
    let batchValues: number[][] = [];
    let batchLabels: number[] = [];
    const flush = () => {
      if (batchValues.length > 0) {
        writer.appendBatch(backbone.apply(batchValues), batchLabels);
        batchValues = [];
        batchLabels = [];
      }
    };
    let taken = 0;
    for (const point of dataset.points()) {
      if (job.maxRecords !== undefined && taken >= job.maxRecords) {
        break;
      }
      batchValues.push(point.values);
      batchLabels.push(point.label);
      taken += 1;
      if (batchValues.length === batchSize) {
        flush();
      }
    }
    flush();
    writer.close();
  } catch (err) {
    writer.abort();
    throw err;
  }

  return {
    path: job.out,
    records: writer.recordsWritten,
    dim: writer.dim,
    numClasses: writer.numClasses,
    labelKind: writer.labelKind,
    backbone: backbone.name,
  };
}

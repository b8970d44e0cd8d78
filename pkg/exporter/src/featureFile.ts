import { closeSync, openSync, unlinkSync, writeSync } from "node:fs";

export const MAGIC = "KOCL";
export const FORMAT_VERSION = 1;
export const LABEL_CLASS = 0;
export const LABEL_REAL = 1;

// header: magic (4s), version (u16), dim (u32), numClasses (u32),
// numRecords (u64), labelKind (u8), all little-endian, 23 bytes total
export const HEADER_SIZE = 23;
const COUNT_OFFSET = 14;

export type LabelKind = typeof LABEL_CLASS | typeof LABEL_REAL;

export interface FeatureFileOptions {
  dim: number;
  numClasses: number;
  /** default: LABEL_CLASS */
  labelKind?: LabelKind;
}

export function recordSize(dim: number, labelKind: LabelKind): number {
  return 4 * dim + (labelKind === LABEL_CLASS ? 4 : 8);
}

function encodeHeader(opts: Required<FeatureFileOptions>, numRecords: number): Buffer {
  const buf = Buffer.alloc(HEADER_SIZE);
  buf.write(MAGIC, 0, "ascii");
  buf.writeUInt16LE(FORMAT_VERSION, 4);
  buf.writeUInt32LE(opts.dim, 6);
  buf.writeUInt32LE(opts.numClasses, 10);
  buf.writeBigUInt64LE(BigInt(numRecords), COUNT_OFFSET);
  buf.writeUInt8(opts.labelKind, 22);
  return buf;
}

/**
 * Sequential writer for the feature-file binary format.
 *
 * The header goes out first with a zero record count; `close()` patches
 * the true count in place, so the header always matches the records
 * actually written. `abort()` removes the partial file instead.
 */
export class FeatureFileWriter {
  readonly path: string;
  readonly dim: number;
  readonly numClasses: number;
  readonly labelKind: LabelKind;
  private fd: number | null;
  private count = 0;

  constructor(path: string, opts: FeatureFileOptions) {
    if (!Number.isInteger(opts.dim) || opts.dim < 1) {
      throw new Error(`dim must be a positive integer, got ${opts.dim}`);
    }
    if (!Number.isInteger(opts.numClasses) || opts.numClasses < 1) {
      throw new Error(`numClasses must be a positive integer, got ${opts.numClasses}`);
    }
    this.path = path;
    this.dim = opts.dim;
    this.numClasses = opts.numClasses;
    this.labelKind = opts.labelKind ?? LABEL_CLASS;
    this.fd = openSync(path, "w");
    writeSync(this.fd, encodeHeader(this, 0));
  }

  get recordsWritten(): number {
    return this.count;
  }

  appendBatch(features: ArrayLike<number>[], labels: ArrayLike<number> | number[]): void {
    if (this.fd === null) {
      throw new Error("writer is closed");
    }
    if (features.length !== labels.length) {
      throw new Error(`${features.length} feature rows but ${labels.length} labels`);
    }
    const rs = recordSize(this.dim, this.labelKind);
    const buf = Buffer.alloc(rs * features.length);
    let off = 0;
    for (let i = 0; i < features.length; i++) {
      const row = features[i];
      if (row.length !== this.dim) {
        throw new Error(
          `record ${this.count + i}: feature length ${row.length}, expected ${this.dim}`,
        );
      }
      for (let j = 0; j < this.dim; j++) {
        const v = row[j];
        if (!Number.isFinite(v)) {
          throw new Error(`record ${this.count + i}: non-finite feature value ${v}`);
        }
        buf.writeFloatLE(v, off);
        off += 4;
      }
      const label = (labels as ArrayLike<number>)[i];
      if (this.labelKind === LABEL_CLASS) {
        if (!Number.isInteger(label) || label < 0 || label >= this.numClasses) {
          throw new Error(
            `record ${this.count + i}: class label ${label} out of range [0, ${this.numClasses})`,
          );
        }
        buf.writeUInt32LE(label, off);
        off += 4;
      } else {
        if (!Number.isFinite(label)) {
          throw new Error(`record ${this.count + i}: non-finite real label ${label}`);
        }
        buf.writeDoubleLE(label, off);
        off += 8;
      }
    }
    writeSync(this.fd, buf);
    this.count += features.length;
  }

  /** Patch the record count into the header and close the file. */
  close(): void {
    if (this.fd === null) {
      return;
    }
    const count = Buffer.alloc(8);
    count.writeBigUInt64LE(BigInt(this.count));
    writeSync(this.fd, count, 0, 8, COUNT_OFFSET);
    closeSync(this.fd);
    this.fd = null;
  }

  /** Close and delete the partial file (cleanup on a failed export). */
  abort(): void {
    if (this.fd === null) {
      return;
    }
    closeSync(this.fd);
    this.fd = null;
    try {
      unlinkSync(this.path);
    } catch {
      // the partial file is already gone; nothing left to clean up
    }
  }
}

"""The feature-file workflow: export once, stream many times.

Real image streams are consumed as fixed embeddings from a frozen
backbone. The binary feature-file format stores them compactly (f32
features, one label per record) in stream order, so runs stay
prequential and reproducible. This demo writes a small file with the
library writer, inspects the header, and runs the online classifier
from it. The standalone exporter in exporter/ produces the same format
from CSVs or its own synthetic generator:

    node exporter/dist/cli.js --dataset synthetic:500:16:4:3 --out demo.kocl

Run:  python3 demos/feature_file_workflow.py
"""

import tempfile
from pathlib import Path

from kocl import (
    ClassifierFilter,
    FeatureFileReader,
    RunConfig,
    run_stream,
    task_incremental_spec,
)
from kocl.data_io import LABEL_CLASS, gen_class_points, write_feature_file


def main():
    spec = task_incremental_spec(
        num_tasks=3, classes_per_task=3, dim=12, points_per_task=150, noise_scale=0.4, seed=2
    )
    feats, labels = gen_class_points(spec)

    with tempfile.TemporaryDirectory() as tmp:
        path = Path(tmp) / "stream.kocl"
        n = write_feature_file(
            path,
            zip(feats, labels),
            dim=spec.dim,
            num_classes=spec.num_classes,
            label_kind=LABEL_CLASS,
        )
        size = path.stat().st_size
        print(f"wrote {n} records to {path.name} ({size} bytes, {size / n:.1f} per record)")

        with FeatureFileReader(path) as reader:
            h = reader.header
            print(
                f"header: dim {h.dim}, {h.num_classes} classes, "
                f"{h.num_records} records, label kind {h.label_kind}"
            )
            filt = ClassifierFilter(h.dim, h.num_classes, delta_lr=0.5, num_mc_samples=64)
            result = run_stream(filt, reader.iter_chunks(10), RunConfig(chunk_size=10))

    m = result.metrics
    print(f"online accuracy {m.running_accuracy:.4f} over {m.n_seen} points")
    print(f"avg log predictive {m.average_log_predictive:+.4f}")
    print(f"final gamma {result.steps[-1].gamma:.4f}")


if __name__ == "__main__":
    main()

"""Materialize MovieLens-100K and MovieLens-1M rating files under data/.

The GroupLens host is not always reachable from build machines, so the
ratings are pulled from the ``neurec`` wheel on PyPI, which ships both
tables verbatim (ML-1M with users/items re-indexed from 0).

    python scripts/fetch_movielens.py [--out data]
"""
from __future__ import annotations

import argparse
import gzip
import subprocess
import sys
import tempfile
import zipfile
from pathlib import Path

WHEEL_SPEC = "neurec==1.0.0"


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", type=Path, default=Path(__file__).resolve().parents[1] / "data")
    args = ap.parse_args(argv)

    with tempfile.TemporaryDirectory() as tmp:
        subprocess.run(
            [sys.executable, "-m", "pip", "download", "--no-deps", "-d", tmp, WHEEL_SPEC],
            check=True,
        )
        wheel = next(Path(tmp).glob("neurec-*.whl"))
        with zipfile.ZipFile(wheel) as zf:
            ml100k = zf.read("neurec/dataset/ml-100k.rating").decode()
            ml1m = (
                zf.read("neurec/dataset/ml-1m.train.rating").decode()
                + zf.read("neurec/dataset/ml-1m.test.rating").decode()
            )

    (args.out / "ml-100k").mkdir(parents=True, exist_ok=True)
    (args.out / "ml-100k" / "u.data").write_text(ml100k)

    rows = [line.split("\t") for line in ml1m.splitlines() if line]
    rows.sort(key=lambda r: (int(r[0]), int(r[3]), int(r[1])))
    (args.out / "ml-1m").mkdir(parents=True, exist_ok=True)
    # mtime=0 keeps the archive byte-stable across fetches
    with open(args.out / "ml-1m" / "ratings.dat.gz", "wb") as raw:
        with gzip.GzipFile(fileobj=raw, mode="wb", mtime=0) as fh:
            fh.write("".join("::".join(r) + "\n" for r in rows).encode())
    print(f"wrote {len(ml100k.splitlines())} ML-100K rows and {len(rows)} ML-1M rows to {args.out}")


if __name__ == "__main__":
    main()

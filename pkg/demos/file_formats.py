"""Tour of the three binary file formats plus the metrics CSV.

Everything is little-endian with an eight-byte ASCII magic.  Datasets
pack bits row-major, eight per byte; checkpoints store the layer sizes,
a JSON metadata block, and raw float64 parameter arrays in a fixed
order; images are plain 8-bit PGM.  All loaders reject damage with
typed errors instead of returning partial objects.
"""

import os
import struct
import tempfile

import numpy as np

from bihm.io import (
    BadMagicError,
    FormatError,
    append_metrics,
    load_checkpoint,
    load_dataset,
    read_pgm,
    save_checkpoint,
    save_dataset,
    write_pgm,
)
from bihm.model import random_model

tmp = tempfile.mkdtemp(prefix="bihm_formats_")
rng = np.random.default_rng(3)


def hexdump(path, n=32):
    blob = open(path, "rb").read()[:n]
    return " ".join(f"{b:02x}" for b in blob)


# Packed binary dataset: magic, version, row and column counts, then the
# bits themselves at one per bit.
data = (rng.random((5, 12)) < 0.4).astype(np.float64)
ds_path = os.path.join(tmp, "toy.bbm")
save_dataset(data, ds_path)
loaded = load_dataset(ds_path)
print("dataset file")
print(f"  shape on disk   {loaded.data.shape}, name {loaded.name!r}")
print(f"  round trip      {np.array_equal(loaded.data, data)}")
print(f"  size            {os.path.getsize(ds_path)} bytes for {data.size} bits")
print(f"  first 20 bytes  {hexdump(ds_path, 20)}")

# Checkpoint: layer sizes and parameters plus free-form JSON metadata.
model = random_model([4, 3], rng)
ck_path = os.path.join(tmp, "toy.bihm")
save_checkpoint(model, {"note": "format demo", "epochs": 0}, ck_path)
ck = load_checkpoint(ck_path)
print("\ncheckpoint file")
print(f"  layer sizes     {ck.model.layer_sizes}")
print(f"  metadata        {ck.metadata}")
same = all(
    np.array_equal(a, b)
    for (_, a), (_, b) in zip(model.param_items(), ck.model.param_items())
)
print(f"  params intact   {same}")
print(f"  first 28 bytes  {hexdump(ck_path, 28)}")

# PGM image: values in [0, 1] quantized to one byte per pixel.
img_path = os.path.join(tmp, "ramp.pgm")
write_pgm(np.linspace(0.0, 1.0, 16), 4, 4, img_path)
values, width, height = read_pgm(img_path)
print("\npgm image")
print(f"  geometry        {width}x{height}")
print(f"  values          {np.round(values[:8], 3)} ...")

# Metrics CSV: fixed header, nine significant digits for floats.
csv_path = os.path.join(tmp, "metrics.csv")
append_metrics(
    csv_path,
    {
        "epoch": 1,
        "updates": 4,
        "train_logptilde": -12.25,
        "valid_logptilde": float("nan"),
        "two_log_z": -0.123456789,
        "ess_pct": 87.5,
        "seconds": 0.25,
    },
)
print("\nmetrics csv")
for line in open(csv_path).read().splitlines():
    print(f"  {line}")

# Corruption never yields a partial object, only a typed error.
bad_path = os.path.join(tmp, "bad.bbm")
blob = open(ds_path, "rb").read()
with open(bad_path, "wb") as fh:
    fh.write(b"NOTADATA" + blob[8:])
print("\ndamaged magic")
try:
    load_dataset(bad_path)
except BadMagicError as exc:
    print(f"  BadMagicError: {exc}")
with open(bad_path, "wb") as fh:
    fh.write(blob[:-1])
try:
    load_dataset(bad_path)
except FormatError as exc:
    print(f"  {type(exc).__name__}: {exc}")

print(f"\nscratch files under {tmp}")

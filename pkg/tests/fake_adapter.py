"""Scriptable adapter used by the gateway tests.

Modes (argv[1]): ok (prior-oracle behavior), version2, junk, die, badmask,
silent (never answers the hello).
"""

import json
import sys
from pathlib import Path

import numpy as np

from artseg.volume_io import BinaryMask, read_mask, write_nifti


def main():
    mode = sys.argv[1] if len(sys.argv) > 1 else "ok"
    if mode == "silent":
        sys.stdin.readline()
        while True:
            if not sys.stdin.readline():
                return 0

    hello = json.loads(sys.stdin.readline())
    assert hello["type"] == "hello"
    ready = {"type": "ready", "name": f"fake-{mode}", "capabilities": ["bbox", "mask", "prior"]}
    if mode == "version2":
        ready["version"] = 2
    print(json.dumps(ready), flush=True)

    for line in sys.stdin:
        msg = json.loads(line)
        if msg["type"] == "bye":
            return 0
        if msg["type"] != "segment":
            print(json.dumps({"type": "error", "case_id": "?", "message": "bad type"}), flush=True)
            continue
        if mode == "die":
            print("dying on purpose", file=sys.stderr, flush=True)
            return 3
        if mode == "junk":
            print("this is not json", flush=True)
            continue
        case_id = msg["case_id"]
        prior = read_mask(msg["prompts"]["mask"])
        x0, y0, z0, x1, y1, z1 = msg["prompts"]["bbox"]
        data = np.zeros_like(prior.data)
        data[x0:x1, y0:y1, z0:z1] = prior.data[x0:x1, y0:y1, z0:z1]
        if mode == "badmask":
            data = data[: max(1, data.shape[0] // 2)]
        out = BinaryMask(data, prior.spacing, prior.origin)
        out_path = Path(msg["out_dir"]) / f"{case_id.replace('/', '_')}_ext.nii"
        out_path.parent.mkdir(parents=True, exist_ok=True)
        write_nifti(out, out_path, dtype="uint8")
        print(
            json.dumps({"type": "result", "case_id": case_id, "mask": str(out_path), "confidence": 1.0}),
            flush=True,
        )
    return 0


if __name__ == "__main__":
    sys.exit(main())

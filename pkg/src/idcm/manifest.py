"""Run manifests: the reproducibility record written beside every output.

A manifest captures the full config snapshot, all seeds, digests of every
input file, the tool version and timestamps.  It lives at
``<output>.manifest.json`` next to the primary output it describes, so
every artifact references the manifest that produced it by name.
Manifests carry timestamps and are therefore excluded from byte-identity
comparisons between runs.
"""

from __future__ import annotations

import datetime
import json
import os
from typing import Mapping, Sequence

import idcm
from idcm.iohelpers import atomic_write, sha256_file


def build_manifest(
    command: str,
    config_snapshot: Mapping,
    seeds: Mapping[str, int],
    inputs: Sequence[str],
    outputs: Sequence[str],
) -> dict:
    return {
        "tool": "idcm",
        "version": idcm.__version__,
        "command": command,
        "config": dict(config_snapshot),
        "seeds": dict(seeds),
        "inputs": {
            os.path.abspath(p): sha256_file(p) for p in inputs if p and os.path.exists(p)
        },
        "outputs": [os.path.abspath(p) for p in outputs if p],
        "created_utc": datetime.datetime.now(datetime.timezone.utc).isoformat(),
    }


def manifest_path(primary_output: str) -> str:
    return primary_output + ".manifest.json"


def write_manifest(primary_output: str, manifest: Mapping) -> str:
    path = manifest_path(primary_output)
    with atomic_write(path) as handle:
        json.dump(manifest, handle, indent=2, sort_keys=True)
        handle.write("\n")
    return path

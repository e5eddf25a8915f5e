"""Uniform segmenter contract with built-in backends and a subprocess bridge.

Every backend consumes a SegmentationRequest (volumes exchanged as NIfTI file
references) and returns a binary mask plus a confidence in [0, 1]. External
models speak UTF-8 JSON lines over stdin/stdout:

    gateway -> adapter   {"type":"hello","version":1}
    adapter -> gateway   {"type":"ready","name":...,"capabilities":[...]}
    request              {"type":"segment","case_id":...,"inputs":{...},
                          "prompts":{"bbox":[x0,y0,z0,x1,y1,z1]|null,
                          "mask":path|null},"out_dir":...}
    response             {"type":"result","case_id":...,"mask":path,
                          "confidence":n} or {"type":"error",...}
    shutdown             {"type":"bye"}

Box corners on the wire are zero-based, min inclusive, max exclusive. One
request is in flight per external handle; stderr is captured for diagnostics.
The gateway re-validates every returned mask (parse, binarity, geometry) and
turns violations into ProtocolViolation rather than accepting them silently.
"""

from __future__ import annotations

import json
import queue
import shlex
import subprocess
import threading
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import (
    ArtsegError,
    BackendFailure,
    GeometryMismatch,
    HandshakeTimeout,
    MissingPrompt,
    ProtocolViolation,
    SpawnFailure,
    VersionMismatch,
)
from .geometry import BBox3
from .registration import RegConfig, propagate_mask, register_rigid
from .volume_io import BinaryMask, read_mask, read_nifti, write_nifti

PROTOCOL_VERSION = 1


@dataclass(frozen=True)
class SegmentationRequest:
    case_id: str
    current: Path
    prior: Path | None
    prior_mask: Path | None
    bbox: BBox3 | None
    mask_prompt: Path | None
    out_dir: Path
    options: dict = field(default_factory=dict)

    def to_wire(self) -> dict:
        return {
            "type": "segment",
            "case_id": self.case_id,
            "inputs": {
                "current": str(self.current),
                "prior": str(self.prior) if self.prior else None,
                "prior_mask": str(self.prior_mask) if self.prior_mask else None,
            },
            "prompts": {
                "bbox": self.bbox.to_list() if self.bbox else None,
                "mask": str(self.mask_prompt) if self.mask_prompt else None,
            },
            "out_dir": str(self.out_dir),
        }


@dataclass(frozen=True)
class SegmentationResult:
    case_id: str
    mask: object  # BinaryMask
    mask_path: Path
    confidence: float


def _sanitize(case_id: str) -> str:
    return "".join(c if c.isalnum() or c in "-_." else "_" for c in case_id)


def _write_result(request, mask, confidence) -> SegmentationResult:
    out_dir = Path(request.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / f"{_sanitize(request.case_id)}_pred.nii"
    write_nifti(mask, path, dtype="uint8")
    return SegmentationResult(request.case_id, mask, path, confidence)


class PriorOracleBackend:
    """Test double: intersect the prior-mask prompt with the box prompt."""

    name = "prior-oracle"

    def segment(self, request: SegmentationRequest) -> SegmentationResult:
        if request.bbox is None or request.mask_prompt is None:
            raise MissingPrompt(
                f"{request.case_id}: prior-oracle needs both bbox and mask prompts"
            )
        prior = read_mask(request.mask_prompt)
        data = np.zeros_like(prior.data)
        sl = request.bbox.as_slices()
        data[sl] = prior.data[sl]
        out = BinaryMask(data, prior.spacing, prior.origin)
        return _write_result(request, out, 1.0)


class PropagateBackend:
    """Registration-only baseline: warp the prior annotation onto the current scan."""

    name = "propagate"

    def __init__(self, config: RegConfig = RegConfig()):
        self.config = config

    def segment(self, request: SegmentationRequest) -> SegmentationResult:
        if request.prior is None or request.prior_mask is None:
            raise MissingPrompt(
                f"{request.case_id}: propagate needs the prior image and mask inputs"
            )
        current = read_nifti(request.current)
        prior = read_nifti(request.prior)
        prior_mask = read_mask(request.prior_mask)
        res = register_rigid(current, prior, self.config)
        warped = propagate_mask(prior_mask, res.transform, current)
        if res.initial_cost > 0:
            conf = 1.0 - min(max(res.final_cost / res.initial_cost, 0.0), 1.0)
        else:
            conf = 1.0
        return _write_result(request, warped, conf)


class ExternalBackend:
    """Handle to a spawned adapter process; one request in flight at a time."""

    def __init__(self, proc, name, capabilities, timeout):
        self._proc = proc
        self.name = name
        self.capabilities = capabilities
        self._timeout = timeout
        self._lock = threading.Lock()

    # filled in by spawn_external
    _lines: queue.Queue
    _stderr: deque

    def stderr_tail(self) -> str:
        return "\n".join(self._stderr)

    def _read_message(self, timeout):
        try:
            line = self._lines.get(timeout=timeout)
        except queue.Empty:
            raise BackendFailure(
                f"adapter {self.name!r} timed out after {timeout}s; "
                f"stderr:\n{self.stderr_tail()}"
            ) from None
        if line is None:
            raise BackendFailure(
                f"adapter {self.name!r} exited unexpectedly; stderr:\n"
                + self.stderr_tail()
            )
        try:
            msg = json.loads(line)
        except json.JSONDecodeError as e:
            raise ProtocolViolation(f"adapter sent invalid JSON: {line!r}") from e
        if not isinstance(msg, dict) or "type" not in msg:
            raise ProtocolViolation(f"adapter sent malformed message: {msg!r}")
        return msg

    def _send(self, doc: dict):
        try:
            self._proc.stdin.write(json.dumps(doc) + "\n")
            self._proc.stdin.flush()
        except (BrokenPipeError, OSError) as e:
            raise BackendFailure(
                f"adapter pipe closed; stderr:\n{self.stderr_tail()}"
            ) from e

    def segment(self, request: SegmentationRequest) -> SegmentationResult:
        with self._lock:
            self._send(request.to_wire())
            msg = self._read_message(self._timeout)
        if msg["type"] == "error":
            raise BackendFailure(
                f"{request.case_id}: adapter error: {msg.get('message', '?')}"
            )
        if msg["type"] != "result":
            raise ProtocolViolation(f"expected result message, got {msg!r}")
        if msg.get("case_id") != request.case_id:
            raise ProtocolViolation(
                f"case_id mismatch: sent {request.case_id!r}, got {msg.get('case_id')!r}"
            )
        if "mask" not in msg or "confidence" not in msg:
            raise ProtocolViolation(f"result missing fields: {msg!r}")
        try:
            mask = read_mask(msg["mask"])
        except ArtsegError as e:
            raise ProtocolViolation(f"returned mask unreadable: {e}") from e
        return SegmentationResult(
            request.case_id, mask, Path(msg["mask"]), float(msg["confidence"])
        )

    def close(self):
        if self._proc.poll() is None:
            try:
                self._send({"type": "bye"})
            except BackendFailure:
                pass
            try:
                self._proc.wait(timeout=10)
            except subprocess.TimeoutExpired:
                self._proc.kill()
                self._proc.wait()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def spawn_external(command, timeout: float = 300.0,
                   handshake_timeout: float = 30.0) -> ExternalBackend:
    """Start an adapter process and complete the hello/ready handshake."""
    argv = shlex.split(command) if isinstance(command, str) else list(command)
    try:
        proc = subprocess.Popen(
            argv,
            stdin=subprocess.PIPE,
            stdout=subprocess.PIPE,
            stderr=subprocess.PIPE,
            text=True,
            bufsize=1,
        )
    except OSError as e:
        raise SpawnFailure(f"cannot start {argv!r}: {e}") from e

    lines: queue.Queue = queue.Queue()
    stderr: deque = deque(maxlen=200)

    def pump_stdout():
        for line in proc.stdout:
            line = line.strip()
            if line:
                lines.put(line)
        lines.put(None)  # EOF marker

    def pump_stderr():
        for line in proc.stderr:
            stderr.append(line.rstrip("\n"))

    threading.Thread(target=pump_stdout, daemon=True).start()
    threading.Thread(target=pump_stderr, daemon=True).start()

    backend = ExternalBackend(proc, name="?", capabilities=(), timeout=timeout)
    backend._lines = lines
    backend._stderr = stderr

    backend._send({"type": "hello", "version": PROTOCOL_VERSION})
    try:
        ready = backend._read_message(handshake_timeout)
    except BackendFailure as e:
        proc.kill()
        raise HandshakeTimeout(str(e)) from None
    if ready.get("type") != "ready":
        proc.kill()
        raise ProtocolViolation(f"expected ready message, got {ready!r}")
    version = ready.get("version", PROTOCOL_VERSION)
    if version != PROTOCOL_VERSION:
        proc.kill()
        raise VersionMismatch(
            f"adapter speaks protocol version {version}, gateway speaks "
            f"{PROTOCOL_VERSION}"
        )
    backend.name = str(ready.get("name", "external"))
    backend.capabilities = tuple(ready.get("capabilities", ()))
    return backend


def make_backend(spec: str, reg_config: RegConfig = RegConfig()):
    """Build a backend from its CLI name: propagate, prior-oracle, external:CMD."""
    if spec == "propagate":
        return PropagateBackend(reg_config)
    if spec == "prior-oracle":
        return PriorOracleBackend()
    if spec.startswith("external:"):
        return spawn_external(spec[len("external:"):])
    raise ValueError(f"unknown backend {spec!r}")


def segment(request: SegmentationRequest, backend) -> SegmentationResult:
    """Dispatch a request and enforce the result contract."""
    current = read_nifti(request.current)
    if request.bbox is not None and not request.bbox.within(current.dims):
        raise GeometryMismatch(
            f"{request.case_id}: bbox {request.bbox} outside grid {current.dims}"
        )
    if request.mask_prompt is not None:
        prompt_mask = read_mask(request.mask_prompt)
        prompt_mask.require_same_geometry(current, "mask prompt and current image")
    result = backend.segment(request)
    if result.mask.dims != current.dims:
        raise ProtocolViolation(
            f"{request.case_id}: returned mask dims {result.mask.dims} do not "
            f"match the current image {current.dims}"
        )
    if not 0.0 <= result.confidence <= 1.0:
        raise ProtocolViolation(
            f"{request.case_id}: confidence {result.confidence} outside [0, 1]"
        )
    return result

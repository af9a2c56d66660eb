"""Foreign-function boundary for the coloring environment and metrics.

Exposes reset/step/metrics/release behind integer handles so external
frameworks can train against this exact environment.  Two entry points
share one implementation:

* the ``Bridge`` class, an in-process handle table, and
* ``python3 -m recolor.bridge``, a framed stdio server speaking
  length-prefixed frames of JSON header + raw little-endian array blocks.

Frame layout (all integers little-endian):

    u32 payload_length | u32 header_length | header JSON | array blocks

The header's ``arrays`` list describes each trailing block in order as
``{"name", "dtype", "shape"}`` with dtype one of u8, u16, f32.  Everything
crossing the boundary is copied; no internal state is aliased.

Error codes are a stable contract: 1 array/shape/data, 2 config/JSON,
3 handle lifecycle.  Images cross the wire as u8 and are normalized to
[0, 1] on this side so results stay bit-identical with the native path.
"""

from __future__ import annotations

import dataclasses
import json
import struct
import sys
import threading

import numpy as np

from . import __version__
from .env import Episode, EnvConfig
from .metrics import EvalOptions, evaluate_pair

ABI_STRING = "recolor-bridge/1"
PROTOCOL_VERSION = 1

E_SHAPE = 1
E_CONFIG = 2
E_LIFECYCLE = 3

WIRE_DTYPES = {
    "u8": np.dtype("u1"),
    "u16": np.dtype("<u2"),
    "f32": np.dtype("<f4"),
}


class BridgeError(Exception):
    """Recoverable operation failure carrying a numeric error code."""

    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code


def _require(arrays: dict, name: str, dtype_code: str) -> np.ndarray:
    if name not in arrays:
        raise BridgeError(E_SHAPE, f"missing array {name!r}")
    arr = arrays[name]
    if arr.dtype != WIRE_DTYPES[dtype_code]:
        raise BridgeError(E_SHAPE, f"array {name!r} must be {dtype_code}, "
                                   f"got {arr.dtype}")
    return arr


def _config_from(doc) -> EnvConfig:
    if isinstance(doc, str):
        try:
            doc = json.loads(doc)
        except json.JSONDecodeError as err:
            raise BridgeError(E_CONFIG, f"config is not valid JSON: {err}")
    if not isinstance(doc, dict):
        raise BridgeError(E_CONFIG, "config must be a JSON object")
    try:
        return EnvConfig.from_dict(doc)
    except (ValueError, TypeError) as err:
        raise BridgeError(E_CONFIG, str(err))


def _options_from(doc) -> EvalOptions:
    if isinstance(doc, str):
        try:
            doc = json.loads(doc)
        except json.JSONDecodeError as err:
            raise BridgeError(E_CONFIG, f"options are not valid JSON: {err}")
    if not isinstance(doc, dict):
        raise BridgeError(E_CONFIG, "options must be a JSON object")
    allowed = {f.name for f in dataclasses.fields(EvalOptions)}
    unknown = set(doc) - allowed
    if unknown:
        raise BridgeError(E_CONFIG, f"unknown option keys: {sorted(unknown)}")
    if "metrics" in doc:
        doc = dict(doc, metrics=tuple(doc["metrics"]))
    try:
        return EvalOptions(**doc)
    except (ValueError, TypeError) as err:
        raise BridgeError(E_CONFIG, str(err))


class Bridge:
    """Handle table over live episodes; each handle has a single owner."""

    def __init__(self):
        self._lock = threading.Lock()
        self._next_handle = 1
        self._episodes: dict[int, Episode] = {}

    def __len__(self) -> int:
        with self._lock:
            return len(self._episodes)

    def _lookup(self, handle) -> Episode:
        with self._lock:
            ep = self._episodes.get(handle)
        if ep is None:
            raise BridgeError(E_LIFECYCLE, f"unknown or released handle {handle!r}")
        return ep

    def reset(self, image_u8, gt_u16, cfg) -> tuple[int, np.ndarray]:
        """New episode from a u8 image and u16 labels; returns f32 observation."""
        cfg = cfg if isinstance(cfg, EnvConfig) else _config_from(cfg)
        image = np.asarray(image_u8)
        if image.dtype != np.uint8:
            raise BridgeError(E_SHAPE, f"image must be u8, got {image.dtype}")
        try:
            ep = Episode(image.astype(np.float64) / 255.0,
                         np.asarray(gt_u16), cfg)
        except ValueError as err:
            raise BridgeError(E_SHAPE, str(err))
        with self._lock:
            handle = self._next_handle
            self._next_handle += 1
            self._episodes[handle] = ep
        return handle, ep.observation().astype("<f4")

    def step(self, handle, action) -> tuple[np.ndarray, dict, int, bool]:
        """Apply one bit plane; returns (obs f32, reward maps f32 + mean, t, done)."""
        ep = self._lookup(handle)
        if ep.done:
            raise BridgeError(E_LIFECYCLE, "episode already finished")
        try:
            obs, rmap, done = ep.step(np.asarray(action))
        except ValueError as err:
            raise BridgeError(E_SHAPE, str(err))
        rewards = {
            "reward_total": rmap.total.astype("<f4"),
            "reward_bf": rmap.bf.astype("<f4"),
            "reward_split": rmap.split.astype("<f4"),
            "reward_merge": rmap.merge.astype("<f4"),
            "reward_mean": rmap.mean,
        }
        return obs.astype("<f4"), rewards, ep.t, done

    def metrics(self, pred_u16, gt_u16, options) -> dict:
        options = options if isinstance(options, EvalOptions) \
            else _options_from(options)
        pred = np.asarray(pred_u16)
        gt = np.asarray(gt_u16)
        if pred.shape != gt.shape:
            raise BridgeError(E_SHAPE, f"label maps differ in size: "
                                       f"{pred.shape} vs {gt.shape}")
        try:
            return evaluate_pair(pred, gt, options)
        except ValueError as err:
            raise BridgeError(E_SHAPE, str(err))

    def release(self, handle) -> None:
        with self._lock:
            if handle not in self._episodes:
                raise BridgeError(E_LIFECYCLE,
                                  f"unknown or released handle {handle!r}")
            del self._episodes[handle]


def write_frame(stream, header: dict, arrays=()) -> None:
    """Serialize one frame; ``arrays`` is a list of (name, dtype_code, array)."""
    descs, blocks = [], []
    for name, code, arr in arrays:
        block = np.ascontiguousarray(np.asarray(arr), dtype=WIRE_DTYPES[code])
        descs.append({"name": name, "dtype": code, "shape": list(block.shape)})
        blocks.append(block.tobytes())
    doc = dict(header)
    doc["arrays"] = descs
    encoded = json.dumps(doc, sort_keys=True).encode("utf-8")
    payload = struct.pack("<I", len(encoded)) + encoded + b"".join(blocks)
    stream.write(struct.pack("<I", len(payload)) + payload)


def _read_payload(stream) -> bytes:
    """One whole frame payload; EOFError at a clean end, ValueError mid-frame."""
    length_raw = stream.read(4)
    if not length_raw:
        raise EOFError
    if len(length_raw) < 4:
        raise ValueError("truncated frame length")
    (total,) = struct.unpack("<I", length_raw)
    payload = stream.read(total)
    if len(payload) < total:
        raise ValueError("truncated frame payload")
    return payload


def _parse_header(payload: bytes) -> tuple[dict, int]:
    if len(payload) < 4:
        raise ValueError("frame too short for header length")
    (header_len,) = struct.unpack("<I", payload[:4])
    if header_len + 4 > len(payload):
        raise ValueError("header length exceeds frame")
    header = json.loads(payload[4:4 + header_len].decode("utf-8"))
    if not isinstance(header, dict):
        raise ValueError("frame header must be a JSON object")
    return header, 4 + header_len


def _parse_arrays(payload: bytes, header: dict, offset: int) -> dict:
    arrays: dict[str, np.ndarray] = {}
    for desc in header.get("arrays", []):
        code = desc.get("dtype")
        if code not in WIRE_DTYPES:
            raise BridgeError(E_SHAPE, f"unsupported wire dtype {code!r}")
        dtype = WIRE_DTYPES[code]
        shape = tuple(int(s) for s in desc["shape"])
        nbytes = int(np.prod(shape, dtype=np.int64)) * dtype.itemsize
        block = payload[offset:offset + nbytes]
        if len(block) != nbytes:
            raise BridgeError(E_SHAPE, f"array {desc.get('name')!r} truncated")
        arrays[desc["name"]] = np.frombuffer(block, dtype=dtype).reshape(shape)
        offset += nbytes
    if offset != len(payload):
        raise BridgeError(E_SHAPE,
                          f"{len(payload) - offset} trailing bytes in frame")
    return arrays


def read_frame(stream) -> tuple[dict, dict[str, np.ndarray]]:
    """Parse one frame into (header, arrays by name); EOFError at stream end."""
    payload = _read_payload(stream)
    header, offset = _parse_header(payload)
    return header, _parse_arrays(payload, header, offset)


def _op_hello(bridge: Bridge, header: dict, arrays: dict):
    return {"abi": ABI_STRING, "protocol_version": PROTOCOL_VERSION,
            "package": "recolor", "package_version": __version__}, []


def _op_reset(bridge: Bridge, header: dict, arrays: dict):
    image = _require(arrays, "image", "u8")
    gt = _require(arrays, "gt", "u16")
    handle, obs = bridge.reset(image, gt, header.get("cfg", {}))
    return ({"handle": handle, "t": 0, "done": False},
            [("observation", "f32", obs)])


def _op_step(bridge: Bridge, header: dict, arrays: dict):
    if "handle" not in header:
        raise BridgeError(E_LIFECYCLE, "step requires a handle")
    action = _require(arrays, "action", "u8")
    obs, rewards, t, done = bridge.step(header["handle"], action)
    out_arrays = [("observation", "f32", obs)]
    out_arrays += [(k, "f32", v) for k, v in rewards.items()
                   if k != "reward_mean"]
    return {"t": t, "done": done, "reward_mean": rewards["reward_mean"]}, out_arrays


def _op_metrics(bridge: Bridge, header: dict, arrays: dict):
    pred = _require(arrays, "pred", "u16")
    gt = _require(arrays, "gt", "u16")
    report = bridge.metrics(pred, gt, header.get("options", {}))
    return {"report": report}, []


def _op_release(bridge: Bridge, header: dict, arrays: dict):
    if "handle" not in header:
        raise BridgeError(E_LIFECYCLE, "release requires a handle")
    bridge.release(header["handle"])
    return {"released": header["handle"]}, []


def _op_shutdown(bridge: Bridge, header: dict, arrays: dict):
    return {"bye": True}, []


_OPS = {
    "hello": _op_hello,
    "reset": _op_reset,
    "step": _op_step,
    "metrics": _op_metrics,
    "release": _op_release,
    "shutdown": _op_shutdown,
}


def serve(stdin=None, stdout=None) -> int:
    """Answer frames until shutdown or EOF.  Op failures are replies, not exits.

    Only a desynchronized stream (truncated frame or unparseable header) ends
    the session with a final error frame; every per-op failure is a normal
    reply carrying its error code.
    """
    inp = stdin if stdin is not None else sys.stdin.buffer
    out = stdout if stdout is not None else sys.stdout.buffer
    bridge = Bridge()
    while True:
        try:
            payload = _read_payload(inp)
        except EOFError:
            return 0
        except ValueError as err:
            write_frame(out, {"id": None, "ok": False, "code": E_CONFIG,
                              "error": f"bad frame: {err}"})
            out.flush()
            return 1
        try:
            header, offset = _parse_header(payload)
        except (ValueError, json.JSONDecodeError) as err:
            write_frame(out, {"id": None, "ok": False, "code": E_CONFIG,
                              "error": f"bad frame header: {err}"})
            out.flush()
            return 1
        req_id = header.get("id")
        op_name = header.get("op")
        try:
            arrays = _parse_arrays(payload, header, offset)
            op = _OPS.get(op_name)
            if op is None:
                raise BridgeError(E_CONFIG, f"unknown op {op_name!r}")
            reply, reply_arrays = op(bridge, header, arrays)
            reply = {"id": req_id, "ok": True, **reply}
        except BridgeError as err:
            reply, reply_arrays = {"id": req_id, "ok": False,
                                   "code": err.code, "error": str(err)}, []
        write_frame(out, reply, reply_arrays)
        out.flush()
        if op_name == "shutdown" and reply["ok"]:
            return 0


if __name__ == "__main__":
    sys.exit(serve())

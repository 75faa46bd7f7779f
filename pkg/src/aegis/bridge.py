"""Versioned wire bridge exposing the safety layer to host runtimes.

Protocol (line oriented, stdin/stdout): requests are

    aegis_v1_<op> <req-id> <payload>

where the payload is a flat little-endian float64 array hex-encoded ("-"
when empty).  Replies are ``ok <req-id> <payload>`` or
``err <req-id> <code> <name> <message>``.  Only flat float arrays cross the
boundary, so numerics survive bit for bit.

Operations and payload layouts (counts of float64 values):

    aegis_v1_create       in  37: alpha_gain, virtual_gain, virtual_weight,
                                  activation_distance, ee_semi_axes[3],
                                  ee_offset[3], ob_center[3], ob_semi_axes[3],
                                  ob_rotation[9] row-major, p_ef[3], r_ef[9]
                          out  1: handle id
    aegis_v1_filter_step  in  21: handle, p_ef[3], r_ef[9], action[7], dt
                          out  9: safe_action[7], h, active(0/1)
    aegis_v1_fit_mvee     in 3n: points, xyz triples
                          out 15: center[3], semi_axes[3], rotation[9]
    aegis_v1_free         in   1: handle          out 0
    aegis_v1_stats        in   0                  out 3: live, peak_live, rss_bytes
    aegis_v1_shutdown     in   0                  out 0 (server exits)

Handles are never shared across threads; freed ids go back to a free list so
long-running hosts see a flat handle table.
"""

from __future__ import annotations

import json
import sys
from dataclasses import dataclass
from typing import Dict, List, Optional

import numpy as np

from .barrier import EEGeometry
from .errors import AegisError
from .filter import Action, FilterParams, FilterState, filter_step, init_filter_state
from .geometry import Ellipsoid, ellipsoid_to_record, fit_mvee

PROTOCOL_VERSION = "aegis_v1"

BAD_ARGUMENT_CODE = 10
BAD_HANDLE_CODE = 11


class BadArgument(AegisError):
    code = BAD_ARGUMENT_CODE


class BadHandle(AegisError):
    code = BAD_HANDLE_CODE


def encode_f64(values) -> str:
    arr = np.asarray(values, dtype="<f8").reshape(-1)
    if arr.size == 0:
        return "-"
    return arr.tobytes().hex()


def decode_f64(payload: str) -> np.ndarray:
    if payload == "-":
        return np.zeros(0)
    try:
        raw = bytes.fromhex(payload)
    except ValueError as exc:
        raise BadArgument(f"payload is not valid hex: {exc}") from exc
    if len(raw) % 8 != 0:
        raise BadArgument("payload length is not a multiple of 8 bytes")
    return np.frombuffer(raw, dtype="<f8").astype(np.float64)


@dataclass
class _Session:
    geom: EEGeometry
    obstacle: Ellipsoid
    params: FilterParams
    fstate: FilterState


class BridgeServer:
    """Dispatch table plus the handle registry."""

    def __init__(self):
        self._sessions: Dict[int, _Session] = {}
        self._free_ids: List[int] = []
        self._next_id = 1
        self._created = 0
        self._peak_live = 0

    # -- handle registry ---------------------------------------------------

    def _alloc(self, session: _Session) -> int:
        if self._free_ids:
            hid = self._free_ids.pop()
        else:
            hid = self._next_id
            self._next_id += 1
        self._sessions[hid] = session
        self._created += 1
        self._peak_live = max(self._peak_live, len(self._sessions))
        return hid

    def _get(self, handle_value: float) -> tuple:
        hid = int(handle_value)
        if hid != handle_value or hid not in self._sessions:
            raise BadHandle(f"no live session with handle {handle_value!r}")
        return hid, self._sessions[hid]

    # -- operations ---------------------------------------------------------

    def create(self, args: np.ndarray) -> np.ndarray:
        if args.size != 37:
            raise BadArgument(f"create expects 37 floats, got {args.size}")
        params = FilterParams(
            alpha_gain=float(args[0]),
            virtual_gain=float(args[1]),
            virtual_weight=float(args[2]),
            activation_distance=float(args[3]),
        )
        geom = EEGeometry(args[4:7], args[7:10])
        obstacle = Ellipsoid(args[10:13], args[13:16], args[16:25].reshape(3, 3))
        p_ef = args[25:28]
        r_ef = args[28:37].reshape(3, 3)
        fstate = init_filter_state(p_ef, r_ef, geom, obstacle)
        hid = self._alloc(_Session(geom, obstacle, params, fstate))
        return np.array([float(hid)])

    def step(self, args: np.ndarray) -> np.ndarray:
        if args.size != 21:
            raise BadArgument(f"filter_step expects 21 floats, got {args.size}")
        hid, session = self._get(float(args[0]))
        dt = float(args[20])
        if dt <= 0.0:
            raise BadArgument(f"dt must be positive, got {dt}")
        action = Action.from_array(args[13:20])
        safe, fstate = filter_step(
            action, args[1:4], args[4:13].reshape(3, 3), session.geom,
            session.obstacle, session.fstate, dt, session.params,
        )
        session.fstate = fstate
        return np.concatenate([
            safe.as_array(), [fstate.last_h, 1.0 if fstate.intervened else 0.0],
        ])

    def fit(self, args: np.ndarray) -> np.ndarray:
        if args.size == 0 or args.size % 3 != 0:
            raise BadArgument(
                f"fit_mvee expects a nonempty xyz-triple array, got {args.size} floats")
        return ellipsoid_to_record(fit_mvee(args.reshape(-1, 3)))

    def free(self, args: np.ndarray) -> np.ndarray:
        if args.size != 1:
            raise BadArgument(f"free expects 1 float, got {args.size}")
        hid, _ = self._get(float(args[0]))
        del self._sessions[hid]
        self._free_ids.append(hid)
        return np.zeros(0)

    def stats(self, args: np.ndarray) -> np.ndarray:
        rss = 0.0
        try:
            with open("/proc/self/statm") as fh:
                rss = float(fh.read().split()[1]) * 4096.0
        except OSError:
            pass
        return np.array([float(len(self._sessions)), float(self._peak_live), rss])

    def handle_line(self, line: str) -> Optional[str]:
        parts = line.strip().split(" ")
        if len(parts) < 2:
            return "err - 10 BadArgument request needs '<op> <id> [payload]'"
        op, req_id = parts[0], parts[1]
        payload = parts[2] if len(parts) > 2 else "-"
        try:
            if op == "aegis_v1_create":
                out = self.create(decode_f64(payload))
            elif op == "aegis_v1_filter_step":
                out = self.step(decode_f64(payload))
            elif op == "aegis_v1_fit_mvee":
                out = self.fit(decode_f64(payload))
            elif op == "aegis_v1_free":
                out = self.free(decode_f64(payload))
            elif op == "aegis_v1_stats":
                out = self.stats(decode_f64(payload))
            elif op == "aegis_v1_shutdown":
                return None
            else:
                raise BadArgument(f"unknown operation {op!r}")
        except AegisError as exc:
            name = type(exc).__name__
            message = str(exc).replace("\n", " ")
            return f"err {req_id} {exc.code} {name} {message}"
        except (ValueError, TypeError) as exc:
            message = str(exc).replace("\n", " ")
            return f"err {req_id} {BAD_ARGUMENT_CODE} BadArgument {message}"
        return f"ok {req_id} {encode_f64(out)}"


def serve() -> int:
    server = BridgeServer()
    out = sys.stdout
    for line in sys.stdin:
        if not line.strip():
            continue
        reply = server.handle_line(line)
        if reply is None:
            break
        out.write(reply + "\n")
        out.flush()
    return 0


def emit_parity_fixture(n_steps: int, n_fits: int, seed: int) -> int:
    """Print native reference sequences for the host-side replay test.

    One JSON object per line: create/step records share a session whose
    virtual state evolves exactly as a host stepping through the bridge
    would see it.
    """
    rng = np.random.default_rng(seed)
    server = BridgeServer()

    create_args = np.concatenate([
        [10.0, 10.0, 1.0, float("inf")],
        [0.06, 0.12, 0.11],
        [0.0, 0.0, -0.02],
        [0.45, 0.03, 0.02],
        [0.05, 0.06, 0.07],
        np.eye(3).reshape(-1),
        [0.0, 0.0, 0.0],
        np.eye(3).reshape(-1),
    ])
    print(json.dumps({"op": "create", "in": encode_f64(create_args)}))
    handle = float(server.create(create_args)[0])

    p = np.zeros(3)
    for _ in range(n_steps):
        u = rng.normal(size=3) * rng.uniform(0.2, 3.0)
        action = np.concatenate([u, rng.normal(size=3) * 0.1, [rng.uniform(-1, 1)]])
        dt = float(rng.uniform(0.01, 0.08))
        args = np.concatenate([[handle], p, np.eye(3).reshape(-1), action, [dt]])
        out = server.step(args)
        print(json.dumps({"op": "step", "in": encode_f64(args),
                          "out": encode_f64(out)}))
        p = p + 0.2 * out[:3] * dt  # follow the filtered plant like a host would

    for _ in range(n_fits):
        n = int(rng.integers(8, 60))
        pts = rng.normal(size=(n, 3)) * rng.uniform(0.05, 0.5)
        out = server.fit(pts.reshape(-1))
        print(json.dumps({"op": "fit", "in": encode_f64(pts.reshape(-1)),
                          "out": encode_f64(out)}))
    return 0


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    if argv[:1] == ["--emit-parity-fixture"]:
        n_steps = int(argv[1]) if len(argv) > 1 else 100
        n_fits = int(argv[2]) if len(argv) > 2 else 100
        seed = int(argv[3]) if len(argv) > 3 else 7
        return emit_parity_fixture(n_steps, n_fits, seed)
    return serve()


if __name__ == "__main__":
    sys.exit(main())

"""Inpainting-predictor contract, built-in mock endpoints, and the wire client.

Every endpoint honors the same contract: the returned image matches the input
bit-exactly on visible patches (pasted caller-side from the unperturbed
input), and masked patches carry the endpoint's reconstruction. Optional
bootstrap noise perturbs only what the predictor sees, never what the caller
gets back.

Wire protocol (newline-delimited JSON over TCP or a child process's stdio):

    request:  {"id": n, "op": "inpaint", "png_b64": "...", "mask": [0|1 x P*P],
               "noise_sigma": s, "seed": k}
    response: {"id": n, "png_b64": "..."}  or  {"id": n, "error": "..."}

``mask`` is the row-major patch grid with 1 = visible. A ``{"op": "ping"}``
request answers ``{"id": n, "pong": true}`` and is used for health checks.
"""

from __future__ import annotations

import base64
import io
import json
import queue
import shlex
import socket
import subprocess
import threading
from dataclasses import dataclass

import numpy as np
from PIL import Image
from scipy.spatial import cKDTree

from .gridmap import PatchMask, RgbImage, SemanticGrid, rgb_to_grid

DEFAULT_NOISE_SIGMA = 2.0
DEFAULT_TIMEOUT = 60.0


class PredictorError(Exception):
    """Base class for predictor failures."""


class EndpointUnavailable(PredictorError):
    """The wire service cannot be reached (or the child process died)."""


class MalformedResponse(PredictorError):
    """The wire service answered with bytes that violate the protocol."""


class PredictTimeout(PredictorError):
    """No response arrived within the configured timeout."""


class RemoteError(PredictorError):
    """The service answered with an explicit error message."""


@dataclass(frozen=True, eq=False)
class PredictRequest:
    image: RgbImage
    mask: PatchMask
    noise_sigma: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.image.width != self.image.height:
            raise ValueError("predictor input must be square")
        p = self.mask.patches_per_side
        if self.image.width % p or (self.image.width // p) < 1:
            raise ValueError(
                f"image side {self.image.width} is not a multiple of {p} patches"
            )
        if self.mask.n_visible == 0:
            raise ValueError("at least one patch must be visible")
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be >= 0")

    @property
    def patch_size(self) -> int:
        return self.image.width // self.mask.patches_per_side


def perturb(image: RgbImage, sigma: float, seed: int) -> RgbImage:
    """Seeded i.i.d. Gaussian pixel noise, clamped to [0, 255] and rounded."""
    if sigma < 0:
        raise ValueError("sigma must be >= 0")
    if sigma == 0:
        return image
    rng = np.random.default_rng(seed)
    noisy = rng.standard_normal(image.pixels.shape, dtype=np.float32)
    noisy *= sigma
    noisy += image.pixels
    np.rint(noisy, out=noisy)
    np.clip(noisy, 0, 255, out=noisy)
    return RgbImage(noisy.astype(np.uint8))


class OracleEndpoint:
    """Returns the configured ground-truth image for masked patches."""

    kind = "oracle"
    uses_input = False  # output does not depend on the (perturbed) input pixels

    def __init__(self, truth: RgbImage):
        self.truth = truth

    def fill(self, pixels: np.ndarray, mask: PatchMask, req: PredictRequest) -> np.ndarray:
        if self.truth.pixels.shape != pixels.shape:
            raise PredictorError("oracle truth does not match the request geometry")
        return np.array(self.truth.pixels)


class NoisyOracleEndpoint:
    """Oracle with seeded label flips at a fixed rate on masked cells.

    A flip replaces the true label with the next label in the colormap, so a
    flip-prone cell toggles between exactly two colors; this gives a
    controllable, analytically predictable imperfection for testing the
    uncertainty and exploration stacks.
    """

    kind = "noisy_oracle"
    uses_input = False  # flips are driven by the request seed, not the pixels

    def __init__(self, truth: SemanticGrid, flip_rate: float):
        if not 0 <= flip_rate <= 1:
            raise ValueError("flip_rate must be in [0, 1]")
        self.truth = truth
        self.flip_rate = flip_rate

    def fill(self, pixels: np.ndarray, mask: PatchMask, req: PredictRequest) -> np.ndarray:
        labels = np.array(self.truth.labels, dtype=np.int64)
        if labels.shape != pixels.shape[:2]:
            raise PredictorError("oracle truth does not match the request geometry")
        masked_px = ~mask.pixel_mask(req.patch_size)
        rng = np.random.default_rng(req.seed)
        flips = (rng.random(labels.shape) < self.flip_rate) & masked_px
        labels[flips] = (labels[flips] + 1) % len(self.truth.colormap)
        return self.truth.colormap.colors[labels]


class NearestFillEndpoint:
    """Fills each masked pixel with the value of the nearest visible pixel.

    Nearness is Euclidean on pixel centers; ties resolve toward the smaller
    row, then the smaller column. The visible->source index map depends only
    on the mask, so it is cached per mask to make repeated bootstrap calls on
    the same visibility cheap.
    """

    kind = "nearest_fill"

    _CACHE_MAX = 8

    def __init__(self):
        self._cache: dict[bytes, tuple[np.ndarray, np.ndarray]] = {}

    def _index_map(self, visible_px: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        key = visible_px.tobytes()
        hit = self._cache.get(key)
        if hit is not None:
            return hit
        vis = np.argwhere(visible_px)  # (r, c) rows
        masked = np.argwhere(~visible_px)
        if len(masked) == 0:
            result = (masked, np.empty(0, dtype=np.int64))
        else:
            tree = cKDTree(vis)
            kq = min(2, len(vis))
            dist, idx = tree.query(masked, k=kq)
            if kq == 1:
                dist = dist[:, None]
                idx = idx[:, None]
            # exact integer squared distances to settle ties deterministically
            d2 = ((vis[idx] - masked[:, None, :]) ** 2).sum(axis=2)
            best = idx[:, 0].astype(np.int64)
            if kq == 2:
                tied = np.nonzero(d2[:, 0] == d2[:, 1])[0]
                for q in tied:
                    r = float(np.sqrt(d2[q, 0])) + 1e-7
                    cand = tree.query_ball_point(masked[q], r)
                    cand = [c for c in cand if ((vis[c] - masked[q]) ** 2).sum() == d2[q, 0]]
                    best[q] = min(cand, key=lambda c: (vis[c, 0], vis[c, 1]))
            src = vis[best]
            result = (masked, src[:, 0] * visible_px.shape[1] + src[:, 1])
        if len(self._cache) >= self._CACHE_MAX:
            self._cache.pop(next(iter(self._cache)))
        self._cache[key] = result
        return result

    def fill(self, pixels: np.ndarray, mask: PatchMask, req: PredictRequest) -> np.ndarray:
        masked, src_flat = self._index_map(mask.pixel_mask(req.patch_size))
        out = np.array(pixels)
        if len(masked):
            flat = pixels.reshape(-1, 3)
            out[masked[:, 0], masked[:, 1]] = flat[src_flat]
        return out


class _StdioTransport:
    """Line transport over a spawned child process's stdin/stdout."""

    def __init__(self, argv: list[str]):
        try:
            self._proc = subprocess.Popen(
                argv, stdin=subprocess.PIPE, stdout=subprocess.PIPE, text=True, bufsize=1
            )
        except OSError as exc:
            raise EndpointUnavailable(f"cannot spawn {argv[0]}: {exc}") from exc
        self._lines: queue.Queue[str | None] = queue.Queue()
        self._reader = threading.Thread(target=self._pump, daemon=True)
        self._reader.start()

    def _pump(self):
        for line in self._proc.stdout:
            self._lines.put(line)
        self._lines.put(None)

    def send_line(self, line: str) -> None:
        if self._proc.poll() is not None:
            raise EndpointUnavailable("predictor process has exited")
        try:
            self._proc.stdin.write(line + "\n")
            self._proc.stdin.flush()
        except (BrokenPipeError, OSError) as exc:
            raise EndpointUnavailable(f"predictor process pipe closed: {exc}") from exc

    def recv_line(self, timeout: float) -> str:
        try:
            line = self._lines.get(timeout=timeout)
        except queue.Empty:
            raise PredictTimeout(f"no response within {timeout}s") from None
        if line is None:
            raise EndpointUnavailable("predictor process closed its output")
        return line

    def close(self):
        if self._proc.poll() is None:
            self._proc.terminate()
            try:
                self._proc.wait(timeout=5)
            except subprocess.TimeoutExpired:
                self._proc.kill()


class _TcpTransport:
    """Line transport over a TCP connection."""

    def __init__(self, addr: str):
        host, _, port = addr.rpartition(":")
        try:
            self._sock = socket.create_connection((host or "127.0.0.1", int(port)), timeout=10)
        except (OSError, ValueError) as exc:
            raise EndpointUnavailable(f"cannot connect to {addr}: {exc}") from exc
        self._rfile = self._sock.makefile("r", encoding="utf-8", newline="\n")

    def send_line(self, line: str) -> None:
        try:
            self._sock.sendall((line + "\n").encode("utf-8"))
        except OSError as exc:
            raise EndpointUnavailable(f"connection lost: {exc}") from exc

    def recv_line(self, timeout: float) -> str:
        self._sock.settimeout(timeout)
        try:
            line = self._rfile.readline()
        except socket.timeout:
            raise PredictTimeout(f"no response within {timeout}s") from None
        except OSError as exc:
            raise EndpointUnavailable(f"connection lost: {exc}") from exc
        if line == "":
            raise EndpointUnavailable("connection closed by the service")
        return line

    def close(self):
        try:
            self._sock.close()
        except OSError:
            pass


def encode_png_b64(img: RgbImage) -> str:
    buf = io.BytesIO()
    Image.fromarray(np.array(img.pixels), mode="RGB").save(buf, format="PNG")
    return base64.b64encode(buf.getvalue()).decode("ascii")


def decode_png_b64(data: str) -> RgbImage:
    try:
        raw = base64.b64decode(data, validate=True)
        with Image.open(io.BytesIO(raw)) as im:
            return RgbImage(np.asarray(im.convert("RGB")))
    except Exception as exc:
        raise MalformedResponse(f"bad png payload: {exc}") from exc


class WireEndpoint:
    """Client for an external inpainting service speaking the wire protocol."""

    kind = "wire"

    def __init__(self, addr: str | None = None, command: str | None = None,
                 timeout: float = DEFAULT_TIMEOUT):
        if (addr is None) == (command is None):
            raise ValueError("give exactly one of addr or command")
        self._addr = addr
        self._command = command
        self._timeout = timeout
        self._transport = None
        self._lock = threading.Lock()
        self._next_id = 1
        self._pending: dict[int, dict] = {}

    def _connect(self):
        if self._transport is None:
            if self._addr is not None:
                self._transport = _TcpTransport(self._addr)
            else:
                self._transport = _StdioTransport(shlex.split(self._command))
        return self._transport

    def close(self):
        if self._transport is not None:
            self._transport.close()
            self._transport = None

    def _roundtrip(self, payload: dict) -> dict:
        with self._lock:
            transport = self._connect()
            rid = self._next_id
            self._next_id += 1
            payload = {"id": rid, **payload}
            transport.send_line(json.dumps(payload))
            while True:
                if rid in self._pending:
                    return self._pending.pop(rid)
                line = transport.recv_line(self._timeout)
                try:
                    obj = json.loads(line)
                except json.JSONDecodeError as exc:
                    raise MalformedResponse(f"response is not JSON: {exc}") from exc
                if not isinstance(obj, dict) or "id" not in obj:
                    raise MalformedResponse("response missing id")
                if obj["id"] == rid:
                    return obj
                self._pending[obj["id"]] = obj

    def ping(self) -> dict:
        obj = self._roundtrip({"op": "ping"})
        if obj.get("pong") is not True:
            raise MalformedResponse(f"unexpected ping reply: {obj}")
        return obj

    def fill(self, pixels: np.ndarray, mask: PatchMask, req: PredictRequest) -> np.ndarray:
        # The service applies the bootstrap noise itself (one round-trip per
        # sample); ship the original image, sigma, and seed.
        payload = {
            "op": "inpaint",
            "png_b64": encode_png_b64(req.image),
            "mask": [int(v) for v in mask.visible.ravel()],
            "noise_sigma": float(req.noise_sigma),
            "seed": int(req.seed),
        }
        obj = self._roundtrip(payload)
        if "error" in obj:
            raise RemoteError(str(obj["error"]))
        if "png_b64" not in obj:
            raise MalformedResponse("response carries neither png_b64 nor error")
        out = decode_png_b64(obj["png_b64"])
        if out.pixels.shape != pixels.shape:
            raise MalformedResponse(
                f"service returned {out.pixels.shape}, expected {pixels.shape}"
            )
        return np.array(out.pixels)


def predict(endpoint, req: PredictRequest) -> RgbImage:
    """Run one point prediction and paste visible patches back verbatim."""
    if req.mask.n_visible == 0:
        raise ValueError("at least one patch must be visible")
    if isinstance(endpoint, WireEndpoint):
        seen = req.image.pixels  # service perturbs using (noise_sigma, seed)
    elif getattr(endpoint, "uses_input", True):
        seen = perturb(req.image, req.noise_sigma, req.seed).pixels
    else:
        seen = req.image.pixels  # perturbation could not change the output
    out = endpoint.fill(seen, req.mask, req)
    visible_px = req.mask.pixel_mask(req.patch_size)
    out[visible_px] = req.image.pixels[visible_px]
    return RgbImage(out)


def predict_to_grid(
    endpoint,
    belief_rgb: RgbImage,
    mask: PatchMask,
    colormap,
    observed: np.ndarray | None = None,
    noise_sigma: float = 0.0,
    seed: int = 0,
) -> SemanticGrid:
    """Predict, then convert colors back to labels.

    Directly observed cells (``observed`` pixel mask) keep the label of their
    observed color even when they sit inside a masked patch whose
    reconstruction disagrees.
    """
    out = predict(endpoint, PredictRequest(belief_rgb, mask, noise_sigma, seed))
    grid = rgb_to_grid(out, colormap)
    if observed is not None and observed.any():
        labels = np.array(grid.labels)
        direct = rgb_to_grid(belief_rgb, colormap).labels
        labels[observed] = direct[observed]
        grid = SemanticGrid(labels, colormap)
    return grid


def make_endpoint(spec: str, truth_image: RgbImage | None = None,
                  truth_grid: SemanticGrid | None = None):
    """Endpoint factory for ``--predictor`` style specs.

    Accepted forms: ``mock:oracle``, ``mock:nearest``, ``mock:noisy:<rate>``,
    ``wire:<host:port>``, ``stdio:<command line>``.
    """
    parts = spec.split(":")
    if parts[0] == "mock":
        if len(parts) >= 2 and parts[1] == "oracle":
            if truth_image is None:
                raise ValueError("mock:oracle needs a ground-truth image")
            return OracleEndpoint(truth_image)
        if len(parts) >= 2 and parts[1] == "nearest":
            return NearestFillEndpoint()
        if len(parts) >= 2 and parts[1] == "noisy":
            rate = float(parts[2]) if len(parts) > 2 else 0.1
            if truth_grid is None:
                raise ValueError("mock:noisy needs a ground-truth label grid")
            return NoisyOracleEndpoint(truth_grid, rate)
        raise ValueError(f"unknown mock endpoint {spec!r}")
    if parts[0] == "wire":
        return WireEndpoint(addr=spec.partition(":")[2])
    if parts[0] == "stdio":
        return WireEndpoint(command=spec.partition(":")[2])
    raise ValueError(f"unknown predictor spec {spec!r}")

"""Line-oriented JSON inference loop.

One JSON object per line in, exactly one per line out, correlated by ``id``.
Ops: ``ping`` (health + variant info) and ``inpaint`` (base64 PNG + patch
visibility list + optional seeded noise). Request handling never kills the
loop: any per-request failure becomes an ``{"id": ..., "error": ...}`` line.
"""

from __future__ import annotations

import base64
import hashlib
import io
import json
import logging
import queue
import socketserver
import sys
import threading
from dataclasses import asdict, dataclass

import numpy as np
import torch
from PIL import Image

from .model import IMAGENET_MEAN, IMAGENET_STD, load_model

log = logging.getLogger("mae_service")


@dataclass
class ServiceConfig:
    checkpoint: str
    tcp: str | None = None       # "host:port"; None = stdio mode
    device: str = "cpu"
    norm_pix_loss: bool = False
    max_concurrent: int = 1


class InpaintService:
    def __init__(self, cfg: ServiceConfig):
        if not cfg.checkpoint:
            raise ValueError("a checkpoint path is required")
        with open(cfg.checkpoint, "rb") as fh:
            digest = hashlib.sha256(fh.read()).hexdigest()
        self.model, self.arch = load_model(
            cfg.checkpoint, device=cfg.device, norm_pix_loss=cfg.norm_pix_loss
        )
        self.cfg = cfg
        self.checkpoint_sha256 = digest
        self._gate = threading.Semaphore(max(1, cfg.max_concurrent))
        self._mean = IMAGENET_MEAN.view(1, 3, 1, 1).to(cfg.device)
        self._std = IMAGENET_STD.view(1, 3, 1, 1).to(cfg.device)
        log.info(
            "loaded checkpoint sha256=%s arch=%s norm_pix_loss=%s",
            digest, self.arch, self.arch.norm_pix_loss,
        )

    def variant(self) -> dict:
        return {
            "arch": asdict(self.arch),
            "checkpoint_sha256": self.checkpoint_sha256,
            "norm_pix_loss": self.arch.norm_pix_loss,
        }

    # -- request handling ---------------------------------------------------

    def handle_line(self, line: str) -> str:
        rid = -1
        try:
            req = json.loads(line)
            if not isinstance(req, dict):
                raise ValueError("request must be a JSON object")
            rid = int(req.get("id", -1))
            op = req.get("op")
            if op == "ping":
                reply = {"id": rid, "pong": True, "variant": self.variant()}
            elif op == "inpaint":
                reply = {"id": rid, "png_b64": self._inpaint(req)}
            else:
                raise ValueError(f"unknown op {op!r}")
        except Exception as exc:  # error responses keep the loop alive
            reply = {"id": rid, "error": f"{type(exc).__name__}: {exc}"}
        return json.dumps(reply)

    def _inpaint(self, req: dict) -> str:
        raw = base64.b64decode(req["png_b64"], validate=True)
        with Image.open(io.BytesIO(raw)) as im:
            pixels = np.asarray(im.convert("RGB"))
        side = self.arch.img_size
        if pixels.shape != (side, side, 3):
            raise ValueError(f"expected a {side}x{side} RGB image, got {pixels.shape}")
        p = self.arch.patches_per_side
        mask = req["mask"]
        if len(mask) != p * p:
            raise ValueError(f"mask must list {p * p} patches, got {len(mask)}")
        visible = np.asarray(mask, dtype=bool)
        if not visible.any():
            raise ValueError("at least one patch must be visible")

        sigma = float(req.get("noise_sigma", 0.0))
        seed = int(req.get("seed", 0))
        seen = pixels
        if sigma > 0:
            rng = np.random.default_rng(seed)
            noisy = pixels.astype(np.float64) + rng.normal(0.0, sigma, pixels.shape)
            seen = np.clip(np.rint(noisy), 0, 255).astype(np.uint8)

        if visible.all():
            out = pixels  # nothing to inpaint; bit-exact paste-through
        else:
            out = self._run_model(seen, visible)
            out = self._paste_visible(out, pixels, visible)
        buf = io.BytesIO()
        Image.fromarray(out).save(buf, format="PNG")
        return base64.b64encode(buf.getvalue()).decode("ascii")

    def _run_model(self, pixels: np.ndarray, visible_patches: np.ndarray) -> np.ndarray:
        with self._gate:
            x = torch.from_numpy(pixels.astype(np.float32) / 255.0)
            x = x.permute(2, 0, 1).unsqueeze(0).to(self.cfg.device)
            x = (x - self._mean) / self._std
            vis = torch.from_numpy(visible_patches).to(self.cfg.device)
            pred = self.model.reconstruct(x, vis)
            pred = pred * self._std + self._mean
            out = pred.squeeze(0).permute(1, 2, 0).clamp(0, 1).cpu().numpy()
        return np.rint(out * 255.0).astype(np.uint8)

    def _paste_visible(self, out: np.ndarray, original: np.ndarray,
                       visible_patches: np.ndarray) -> np.ndarray:
        p = self.arch.patches_per_side
        ps = self.arch.patch_size
        grid = visible_patches.reshape(p, p)
        px_visible = np.repeat(np.repeat(grid, ps, axis=0), ps, axis=1)
        merged = np.array(out)
        merged[px_visible] = original[px_visible]
        return merged

    # -- transports ----------------------------------------------------------

    def serve_lines(self, reader, write_line) -> None:
        """Process one connection's lines until EOF.

        A reader thread keeps draining the input while responses are being
        written, so clients that pipeline several large in-flight requests
        cannot deadlock the pipe; requests are still answered in order.
        """
        pending: queue.Queue[str | None] = queue.Queue(maxsize=64)

        def pump():
            try:
                for line in reader:
                    pending.put(line)
            finally:
                pending.put(None)

        threading.Thread(target=pump, daemon=True).start()
        while True:
            line = pending.get()
            if line is None:
                return
            if not line.strip():
                continue
            write_line(self.handle_line(line))

    def serve_stdio(self, stdin=None, stdout=None) -> None:
        stdin = stdin or sys.stdin
        stdout = stdout or sys.stdout
        log.info("serving on stdio")

        def write_line(payload: str) -> None:
            stdout.write(payload + "\n")
            stdout.flush()

        self.serve_lines(stdin, write_line)

    def serve_tcp(self, addr: str) -> "socketserver.ThreadingTCPServer":
        host, _, port = addr.rpartition(":")
        service = self

        class Handler(socketserver.StreamRequestHandler):
            def handle(self):
                reader = (raw.decode("utf-8", errors="replace") for raw in self.rfile)

                def write_line(payload: str) -> None:
                    self.wfile.write((payload + "\n").encode("utf-8"))
                    self.wfile.flush()

                service.serve_lines(reader, write_line)

        server = socketserver.ThreadingTCPServer(
            (host or "127.0.0.1", int(port)), Handler
        )
        server.daemon_threads = True
        log.info("serving on tcp %s:%d", *server.server_address)
        return server

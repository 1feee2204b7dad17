import base64
import io
import json
import subprocess
import sys

import numpy as np
import pytest
from PIL import Image

from mae_service import save_tiny_checkpoint


@pytest.fixture(scope="session")
def tiny_checkpoint(tmp_path_factory):
    path = tmp_path_factory.mktemp("ckpt") / "tiny_mae.pt"
    save_tiny_checkpoint(path, seed=7)
    return str(path)


class StdioClient:
    """Raw line client against a spawned service process."""

    def __init__(self, checkpoint: str):
        self.proc = subprocess.Popen(
            [sys.executable, "-m", "mae_service", "--checkpoint", checkpoint, "--stdio"],
            stdin=subprocess.PIPE,
            stdout=subprocess.PIPE,
            stderr=subprocess.PIPE,
            text=True,
            bufsize=1,
        )

    def send(self, obj) -> None:
        self.proc.stdin.write(json.dumps(obj) + "\n")
        self.proc.stdin.flush()

    def send_raw(self, line: str) -> None:
        self.proc.stdin.write(line + "\n")
        self.proc.stdin.flush()

    def recv(self) -> dict:
        line = self.proc.stdout.readline()
        assert line, "service closed its output"
        return json.loads(line)

    def close(self):
        self.proc.stdin.close()
        self.proc.terminate()
        self.proc.wait(timeout=10)


@pytest.fixture
def client(tiny_checkpoint):
    c = StdioClient(tiny_checkpoint)
    yield c
    c.close()


def encode_image(pixels: np.ndarray) -> str:
    buf = io.BytesIO()
    Image.fromarray(pixels).save(buf, format="PNG")
    return base64.b64encode(buf.getvalue()).decode("ascii")


def decode_image(b64: str) -> np.ndarray:
    with Image.open(io.BytesIO(base64.b64decode(b64))) as im:
        return np.asarray(im.convert("RGB"))


def random_image(seed=0) -> np.ndarray:
    return np.random.default_rng(seed).integers(0, 256, (224, 224, 3), dtype=np.uint8)


def inpaint_request(rid, pixels, mask, sigma=0.0, seed=0) -> dict:
    return {
        "id": rid,
        "op": "inpaint",
        "png_b64": encode_image(pixels),
        "mask": [int(v) for v in mask],
        "noise_sigma": sigma,
        "seed": seed,
    }

"""Masked-autoencoder ViT with caller-controlled patch visibility.

State-dict layout matches the reference MAE releases (patch_embed/blocks/
norm/decoder_*), so published ViT-Base/Large/Huge checkpoints load directly.
Architectures are inferred from the checkpoint tensors; head counts come from
embedded metadata when present, else from the standard dim->heads table.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import torch
import torch.nn as nn

IMAGENET_MEAN = torch.tensor([0.485, 0.456, 0.406])
IMAGENET_STD = torch.tensor([0.229, 0.224, 0.225])

META_KEY = "mae_service_meta"

_HEADS_BY_DIM = {384: 6, 512: 16, 768: 12, 1024: 16, 1280: 16}


@dataclass(frozen=True)
class MaeArch:
    img_size: int = 224
    patch_size: int = 16
    embed_dim: int = 1024
    depth: int = 24
    num_heads: int = 16
    decoder_embed_dim: int = 512
    decoder_depth: int = 8
    decoder_num_heads: int = 16
    mlp_ratio: float = 4.0
    norm_pix_loss: bool = False

    @property
    def patches_per_side(self) -> int:
        return self.img_size // self.patch_size


class Attention(nn.Module):
    def __init__(self, dim: int, num_heads: int):
        super().__init__()
        self.num_heads = num_heads
        self.scale = (dim // num_heads) ** -0.5
        self.qkv = nn.Linear(dim, dim * 3, bias=True)
        self.proj = nn.Linear(dim, dim)

    def forward(self, x):
        n, l, d = x.shape
        qkv = self.qkv(x).reshape(n, l, 3, self.num_heads, d // self.num_heads)
        q, k, v = qkv.permute(2, 0, 3, 1, 4)
        attn = (q @ k.transpose(-2, -1)) * self.scale
        attn = attn.softmax(dim=-1)
        out = (attn @ v).transpose(1, 2).reshape(n, l, d)
        return self.proj(out)


class Mlp(nn.Module):
    def __init__(self, dim: int, hidden: int):
        super().__init__()
        self.fc1 = nn.Linear(dim, hidden)
        self.act = nn.GELU()
        self.fc2 = nn.Linear(hidden, dim)

    def forward(self, x):
        return self.fc2(self.act(self.fc1(x)))


class Block(nn.Module):
    def __init__(self, dim: int, num_heads: int, mlp_ratio: float):
        super().__init__()
        self.norm1 = nn.LayerNorm(dim, eps=1e-6)
        self.attn = Attention(dim, num_heads)
        self.norm2 = nn.LayerNorm(dim, eps=1e-6)
        self.mlp = Mlp(dim, int(dim * mlp_ratio))

    def forward(self, x):
        x = x + self.attn(self.norm1(x))
        x = x + self.mlp(self.norm2(x))
        return x


class PatchEmbed(nn.Module):
    def __init__(self, img_size: int, patch_size: int, embed_dim: int):
        super().__init__()
        self.num_patches = (img_size // patch_size) ** 2
        self.proj = nn.Conv2d(3, embed_dim, kernel_size=patch_size, stride=patch_size)

    def forward(self, x):
        return self.proj(x).flatten(2).transpose(1, 2)


class MaskedAutoencoder(nn.Module):
    """Encoder over visible patches only; decoder reconstructs every patch."""

    def __init__(self, arch: MaeArch):
        super().__init__()
        self.arch = arch
        num_patches = arch.patches_per_side**2

        self.patch_embed = PatchEmbed(arch.img_size, arch.patch_size, arch.embed_dim)
        self.cls_token = nn.Parameter(torch.zeros(1, 1, arch.embed_dim))
        self.pos_embed = nn.Parameter(torch.zeros(1, num_patches + 1, arch.embed_dim))
        self.blocks = nn.ModuleList(
            Block(arch.embed_dim, arch.num_heads, arch.mlp_ratio) for _ in range(arch.depth)
        )
        self.norm = nn.LayerNorm(arch.embed_dim, eps=1e-6)

        self.decoder_embed = nn.Linear(arch.embed_dim, arch.decoder_embed_dim)
        self.mask_token = nn.Parameter(torch.zeros(1, 1, arch.decoder_embed_dim))
        self.decoder_pos_embed = nn.Parameter(
            torch.zeros(1, num_patches + 1, arch.decoder_embed_dim)
        )
        self.decoder_blocks = nn.ModuleList(
            Block(arch.decoder_embed_dim, arch.decoder_num_heads, arch.mlp_ratio)
            for _ in range(arch.decoder_depth)
        )
        self.decoder_norm = nn.LayerNorm(arch.decoder_embed_dim, eps=1e-6)
        self.decoder_pred = nn.Linear(
            arch.decoder_embed_dim, arch.patch_size**2 * 3, bias=True
        )

    def unpatchify(self, x):
        p = self.arch.patch_size
        h = w = self.arch.patches_per_side
        x = x.reshape(x.shape[0], h, w, p, p, 3)
        x = torch.einsum("nhwpqc->nchpwq", x)
        return x.reshape(x.shape[0], 3, h * p, w * p)

    @torch.no_grad()
    def reconstruct(self, img: torch.Tensor, visible: torch.Tensor) -> torch.Tensor:
        """img: (1, 3, S, S) normalized; visible: (L,) bool in patch order."""
        x = self.patch_embed(img)
        x = x + self.pos_embed[:, 1:, :]

        ids_keep = torch.nonzero(visible, as_tuple=False).squeeze(1)
        ids_masked = torch.nonzero(~visible, as_tuple=False).squeeze(1)
        ids_shuffle = torch.cat([ids_keep, ids_masked])
        ids_restore = torch.argsort(ids_shuffle)

        x = x[:, ids_keep, :]
        cls = self.cls_token + self.pos_embed[:, :1, :]
        x = torch.cat([cls.expand(x.shape[0], -1, -1), x], dim=1)
        for blk in self.blocks:
            x = blk(x)
        x = self.norm(x)

        x = self.decoder_embed(x)
        n_masked = ids_masked.numel()
        mask_tokens = self.mask_token.expand(x.shape[0], n_masked, -1)
        full = torch.cat([x[:, 1:, :], mask_tokens], dim=1)
        full = full[:, ids_restore, :]
        full = torch.cat([x[:, :1, :], full], dim=1)
        full = full + self.decoder_pos_embed
        for blk in self.decoder_blocks:
            full = blk(full)
        full = self.decoder_norm(full)
        pred = self.decoder_pred(full)[:, 1:, :]
        return self.unpatchify(pred)


def infer_arch(state: dict, meta: dict | None = None,
               norm_pix_loss: bool = False) -> MaeArch:
    """Derive the architecture from checkpoint tensor shapes (+ metadata)."""
    if meta:
        return MaeArch(**meta)
    proj = state["patch_embed.proj.weight"]
    embed_dim, _, patch_size, _ = proj.shape
    num_patches = state["pos_embed"].shape[1] - 1
    img_size = int(math.isqrt(num_patches)) * patch_size
    depth = 1 + max(
        int(k.split(".")[1]) for k in state if k.startswith("blocks.")
    )
    dec_dim = state["decoder_embed.weight"].shape[0]
    dec_depth = 1 + max(
        int(k.split(".")[1]) for k in state if k.startswith("decoder_blocks.")
    )
    hidden = state["blocks.0.mlp.fc1.weight"].shape[0]
    return MaeArch(
        img_size=img_size,
        patch_size=patch_size,
        embed_dim=embed_dim,
        depth=depth,
        num_heads=_HEADS_BY_DIM.get(embed_dim, 8),
        decoder_embed_dim=dec_dim,
        decoder_depth=dec_depth,
        decoder_num_heads=_HEADS_BY_DIM.get(dec_dim, 8),
        mlp_ratio=hidden / embed_dim,
        norm_pix_loss=norm_pix_loss,
    )


def load_model(checkpoint_path, device: str = "cpu",
               norm_pix_loss: bool = False) -> tuple[MaskedAutoencoder, MaeArch]:
    blob = torch.load(checkpoint_path, map_location="cpu", weights_only=True)
    meta = None
    if isinstance(blob, dict) and META_KEY in blob:
        meta = dict(blob[META_KEY])
        norm_pix_loss = bool(meta.pop("norm_pix_loss", norm_pix_loss))
        meta["norm_pix_loss"] = norm_pix_loss
    state = blob.get("model", blob) if isinstance(blob, dict) else blob
    state = {k: v for k, v in state.items() if k != META_KEY}
    arch = infer_arch(state, meta, norm_pix_loss)
    model = MaskedAutoencoder(arch)
    missing, unexpected = model.load_state_dict(state, strict=False)
    missing = [m for m in missing]
    if missing:
        raise ValueError(f"checkpoint is missing required tensors: {missing[:5]}")
    model.to(device)
    model.eval()
    return model, arch


def save_tiny_checkpoint(path, seed: int = 0) -> MaeArch:
    """Small random-weight checkpoint for protocol tests (not a trained model)."""
    arch = MaeArch(
        img_size=224, patch_size=16, embed_dim=32, depth=2, num_heads=2,
        decoder_embed_dim=16, decoder_depth=1, decoder_num_heads=2,
        mlp_ratio=2.0, norm_pix_loss=False,
    )
    torch.manual_seed(seed)
    model = MaskedAutoencoder(arch)
    for p in model.parameters():
        nn.init.normal_(p, std=0.02)
    torch.save({"model": model.state_dict(), META_KEY: asdict(arch)}, path)
    return arch

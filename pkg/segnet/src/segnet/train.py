"""Training loop: Adam, Dice + binary cross-entropy loss, checkpointing."""

from __future__ import annotations

import dataclasses
import json
import time

import torch
from torch.utils.data import DataLoader

from .data import PairedFrames
from .model import LclmSpec, ModelSpec, build_model


def dice_bce_loss(prob, target, eps=1e-6):
    prob = prob.clamp(eps, 1.0 - eps)
    bce = torch.nn.functional.binary_cross_entropy(prob, target)
    inter = (prob * target).sum(dim=(1, 2, 3))
    denom = prob.sum(dim=(1, 2, 3)) + target.sum(dim=(1, 2, 3))
    dice = (2.0 * inter + eps) / (denom + eps)
    return bce + (1.0 - dice).mean()


def soft_dice(prob, target, eps=1e-6):
    pred = (prob > 0.5).float()
    inter = (pred * target).sum()
    return float((2.0 * inter + eps) / (pred.sum() + target.sum() + eps))


def save_checkpoint(model, path: str, log=None):
    spec = dataclasses.asdict(model.spec)
    torch.save({"spec": spec, "state_dict": model.state_dict(), "log": log or []}, path)


def load_checkpoint(path: str):
    ckpt = torch.load(path, map_location="cpu", weights_only=False)
    spec_dict = dict(ckpt["spec"])
    spec_dict["lclm"] = LclmSpec(**spec_dict["lclm"])
    for key in ("stage_channels", "attn_dims", "attn_depths"):
        spec_dict[key] = tuple(spec_dict[key])
    model = build_model(ModelSpec(**spec_dict))
    model.load_state_dict(ckpt["state_dict"])
    model.eval()
    return model, ckpt.get("log", [])


def train(
    data_dir: str,
    out_ckpt: str,
    spec: ModelSpec = None,
    size=None,
    indices=None,
    batch_size: int = 32,
    lr: float = 1e-4,
    max_steps: int = 500,
    seed: int = 0,
    target_dice: float = None,
    time_budget_s: float = None,
    log_path: str = None,
    device: str = "cpu",
):
    """Train and write a checkpoint; returns the per-step log."""
    torch.manual_seed(seed)
    ds = PairedFrames(data_dir, size=size, indices=indices)
    loader = DataLoader(ds, batch_size=batch_size, shuffle=True, drop_last=False,
                        generator=torch.Generator().manual_seed(seed))
    model = build_model(spec).to(device)
    model.train()
    opt = torch.optim.Adam(model.parameters(), lr=lr)
    log = []
    t0 = time.perf_counter()
    step = 0
    while step < max_steps:
        for img, mask in loader:
            img, mask = img.to(device), mask.to(device)
            prob = model(img)
            loss = dice_bce_loss(prob, mask)
            opt.zero_grad()
            loss.backward()
            opt.step()
            step += 1
            d = soft_dice(prob.detach(), mask)
            log.append({"step": step, "loss": loss.detach().item(), "dice": d,
                        "t": time.perf_counter() - t0})
            done = step >= max_steps
            if target_dice is not None and d >= target_dice and step >= 10:
                done = True
            if time_budget_s is not None and log[-1]["t"] > time_budget_s:
                done = True
            if done:
                break
        else:
            continue
        break
    model.eval()
    save_checkpoint(model, out_ckpt, log)
    if log_path:
        with open(log_path, "w") as fh:
            json.dump(log, fh, indent=1)
    return log

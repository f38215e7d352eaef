"""Batch inference: frame PNGs in, binarized pred PNGs + timing log out."""

from __future__ import annotations

import json
import os
import re
import time

import numpy as np
import torch
from PIL import Image

from .data import load_image
from .train import load_checkpoint


def infer(ckpt_path: str, image_dir: str, out_dir: str, size=None,
          threshold: float = 0.5, log_path: str = None, device: str = "cpu"):
    """Segment every frame_NNNNNN.png; write pred_NNNNNN.png at input size."""
    model, _ = load_checkpoint(ckpt_path)
    model.to(device).eval()
    os.makedirs(out_dir, exist_ok=True)
    names = sorted(
        n for n in os.listdir(image_dir) if re.fullmatch(r"frame_\d{6}\.png", n)
    )
    if not names:
        raise FileNotFoundError(f"no frame PNGs in {image_dir}")
    timings = []
    with torch.no_grad():
        for name in names:
            path = os.path.join(image_dir, name)
            with Image.open(path) as im:
                native = (im.height, im.width)
            img = load_image(path, size)[None].to(device)
            t0 = time.perf_counter()
            prob = model(img)[0, 0].cpu()
            latency = time.perf_counter() - t0
            mask = (prob.numpy() > threshold).astype(np.uint8) * 255
            out = Image.fromarray(mask, mode="L")
            if out.size != (native[1], native[0]):
                out = out.resize((native[1], native[0]), Image.NEAREST)
            pred_name = name.replace("frame_", "pred_")
            out.save(os.path.join(out_dir, pred_name))
            timings.append({"frame": name, "latency_s": latency})
    if log_path:
        with open(log_path, "w") as fh:
            json.dump(timings, fh, indent=1)
    return timings

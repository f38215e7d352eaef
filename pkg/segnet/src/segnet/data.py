"""Paired frame/label dataset over a simulator output directory."""

from __future__ import annotations

import os
import re

import numpy as np
import torch
from PIL import Image
from torch.utils.data import Dataset


class DatasetError(RuntimeError):
    pass


def list_pairs(data_dir: str):
    """Sorted (index, frame_path, label_path) triples; every frame needs a label."""
    frames = {}
    for name in os.listdir(data_dir):
        m = re.fullmatch(r"frame_(\d{6})\.png", name)
        if m:
            frames[int(m.group(1))] = os.path.join(data_dir, name)
    if not frames:
        raise DatasetError(f"no frame PNGs in {data_dir}")
    pairs = []
    for idx in sorted(frames):
        label = os.path.join(data_dir, f"label_{idx:06d}.png")
        if not os.path.isfile(label):
            raise DatasetError(f"missing label for frame {idx:06d}")
        pairs.append((idx, frames[idx], label))
    return pairs


def load_image(path: str, size=None) -> torch.Tensor:
    img = Image.open(path).convert("L")
    if size is not None:
        img = img.resize((size[1], size[0]), Image.BILINEAR)
    arr = np.asarray(img, dtype=np.float32) / 255.0
    return torch.from_numpy(arr)[None]


def load_mask(path: str, size=None) -> torch.Tensor:
    img = Image.open(path).convert("L")
    if size is not None:
        img = img.resize((size[1], size[0]), Image.NEAREST)
    arr = (np.asarray(img) > 127).astype(np.float32)
    return torch.from_numpy(arr)[None]


class PairedFrames(Dataset):
    def __init__(self, data_dir: str, size=None, indices=None):
        pairs = list_pairs(data_dir)
        if indices is not None:
            wanted = set(indices)
            pairs = [p for p in pairs if p[0] in wanted]
        if not pairs:
            raise DatasetError("dataset selection is empty")
        self.pairs = pairs
        self.size = size

    def __len__(self):
        return len(self.pairs)

    def __getitem__(self, i):
        _, frame, label = self.pairs[i]
        return load_image(frame, self.size), load_mask(label, self.size)

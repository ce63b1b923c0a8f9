"""Frozen convolutional backbones exposing stride-8 and stride-16 features.

Every backbone maps a normalized (1, 3, H, W) tensor to ``{3: f8, 4: f16}``
where block 3 has stride 8 and block 4 stride 16. Parameters are frozen:
no operation in this package ever updates them.
"""

from __future__ import annotations

import hashlib
import math

import torch
import torch.nn as nn
import torch.nn.functional as F

from .errors import CheckpointError, ConfigurationError

IMAGENET_MEAN = (0.485, 0.456, 0.406)
IMAGENET_STD = (0.229, 0.224, 0.225)

BLOCK_STRIDES = {3: 8, 4: 16}


class Resnet50Backbone(nn.Module):
    """First four blocks of a classification-pretrained ResNet-50.

    Block 3 is the stride-8 stage (512 channels), block 4 the stride-16
    stage (1024 channels). Weights come from a state-dict file or from the
    torchvision cache; without either, construction fails rather than
    silently serving random features.
    """

    name = "resnet50"
    mean = IMAGENET_MEAN
    std = IMAGENET_STD
    block_channels = {3: 512, 4: 1024}

    def __init__(self, weights_path: str | None = None):
        super().__init__()
        import torchvision

        net = torchvision.models.resnet50(weights=None)
        if weights_path is not None:
            state = torch.load(weights_path, map_location="cpu", weights_only=True)
            net.load_state_dict(state, strict=False)
        else:
            try:
                weights = torchvision.models.ResNet50_Weights.IMAGENET1K_V2
                net.load_state_dict(weights.get_state_dict(progress=False))
            except Exception as exc:
                raise CheckpointError(
                    "pretrained resnet50 weights unavailable: pass a weights file "
                    f"or pre-populate the torchvision cache ({exc})"
                ) from exc
        self.stem = nn.Sequential(net.conv1, net.bn1, net.relu, net.maxpool)
        self.layer1 = net.layer1
        self.layer2 = net.layer2
        self.layer3 = net.layer3
        freeze(self)

    def forward(self, x: torch.Tensor) -> dict[int, torch.Tensor]:
        x = self.layer1(self.stem(x))
        f8 = self.layer2(x)
        f16 = self.layer3(f8)
        return {3: f8, 4: f16}


class TinyBackbone(nn.Module):
    """Small frozen convnet with deterministic seeded weights.

    Stands in for the pretrained backbone in tests and on machines without
    the pretrained weights; same interface, far less compute.
    """

    name = "tiny"
    mean = IMAGENET_MEAN
    std = IMAGENET_STD
    block_channels = {3: 64, 4: 128}

    def __init__(self, seed: int = 0):
        super().__init__()
        self.seed = seed
        self.conv1 = nn.Conv2d(3, 16, 3, stride=2, padding=1)
        self.conv2 = nn.Conv2d(16, 32, 3, stride=2, padding=1)
        self.conv3 = nn.Conv2d(32, 64, 3, stride=2, padding=1)
        self.conv4 = nn.Conv2d(64, 128, 3, stride=2, padding=1)
        g = torch.Generator().manual_seed(seed)
        for m in (self.conv1, self.conv2, self.conv3, self.conv4):
            fan_in = m.in_channels * m.kernel_size[0] * m.kernel_size[1]
            with torch.no_grad():
                m.weight.normal_(0.0, math.sqrt(2.0 / fan_in), generator=g)
                m.bias.zero_()
        freeze(self)

    def forward(self, x: torch.Tensor) -> dict[int, torch.Tensor]:
        x = F.relu(self.conv1(x))
        x = F.relu(self.conv2(x))
        f8 = F.relu(self.conv3(x))
        f16 = F.relu(self.conv4(f8))
        return {3: f8, 4: f16}


def freeze(module: nn.Module) -> nn.Module:
    module.eval()
    for p in module.parameters():
        p.requires_grad_(False)
    return module


def make_backbone(name: str, weights_path: str | None = None, seed: int = 0) -> nn.Module:
    if name == "resnet50":
        return Resnet50Backbone(weights_path)
    if name == "tiny":
        return TinyBackbone(seed=seed)
    raise ConfigurationError(f"unknown backbone '{name}' (choose from: resnet50, tiny)")


def parameter_checksum(module: nn.Module) -> str:
    """SHA-256 over all parameters and buffers, in state-dict order."""
    h = hashlib.sha256()
    for key, tensor in sorted(module.state_dict().items()):
        h.update(key.encode())
        h.update(tensor.detach().cpu().numpy().tobytes())
    return h.hexdigest()

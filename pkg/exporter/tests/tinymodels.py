"""Small CPU models for exporter tests."""
import torch
from torch import nn


class TinyNet(nn.Module):
    """Three conv stages with /2 pooling each, GAP head, deterministic init."""

    def __init__(self, num_classes: int = 6, seed: int = 0):
        super().__init__()
        torch.manual_seed(seed)
        self.stage1 = nn.Sequential(nn.Conv2d(3, 4, 3, padding=1), nn.ReLU())
        self.pool1 = nn.MaxPool2d(2)
        self.stage2 = nn.Sequential(nn.Conv2d(4, 8, 3, padding=1), nn.ReLU())
        self.pool2 = nn.MaxPool2d(2)
        self.stage3 = nn.Sequential(nn.Conv2d(8, 16, 3, padding=1), nn.ReLU())
        self.pool3 = nn.MaxPool2d(2)
        self.head = nn.Linear(16, num_classes)

    def forward(self, x):
        x = self.pool1(self.stage1(x))
        x = self.pool2(self.stage2(x))
        x = self.pool3(self.stage3(x))
        x = x.mean(dim=(2, 3))
        return self.head(x)


class GapProbe(nn.Module):
    """Identity taps straight into a GAP head; gradients have a closed form.

    With logits y_c = sum_k W[c,k] * mean_ij X[k,i,j], the gradient of y_c at
    every location of X is exactly W[c,k] / (H*W).
    """

    def __init__(self, channels: int = 5, num_classes: int = 4, seed: int = 1):
        super().__init__()
        torch.manual_seed(seed)
        self.deep_tap = nn.Identity()
        self.shallow_tap = nn.Identity()
        self.head = nn.Linear(channels, num_classes, bias=False)
        self.adapter = nn.Conv2d(3, channels, 1)

    def forward(self, x):
        x = self.adapter(x)
        x = self.deep_tap(x)
        x = self.shallow_tap(x)
        return self.head(x.mean(dim=(2, 3)))

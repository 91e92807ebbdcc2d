"""Personalized diffusion-based blind face restoration on synthetic identities.

Subpackages/modules:
  schedule  variance-preserving noise schedule and reverse-step algebra
  nets      token-conditioned denoiser, guiding encoder, checkpoints
  degrade   two-stage blur/downsample/noise/compression synthesizer
  facegen   procedural identity dataset with ground-truth identity vectors
  pivot     base training and the two-stage personalization fine-tunes
  sampler   guided sampling: blind, staged personalized, and multi-pass
  metrics   PSNR/SSIM and the learned identity-similarity embedder
  harness   config, CLI, provenance, and the scripted experiments
"""

__version__ = "0.1.0"

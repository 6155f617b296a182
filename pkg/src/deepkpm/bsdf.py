"""BSDF evaluation and importance sampling for the four material kinds.

Directions point away from the surface. ``n`` is the shading normal on the
side of ``wo``; ``front`` says whether that is the geometric outside (it picks
the refraction ratio for dielectrics).
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _pykernels as pk
from .scene import Material

INV_PI = 1.0 / math.pi


@dataclass(frozen=True)
class BsdfSample:
    wi: np.ndarray
    pdf: float  # solid-angle pdf, 1 for delta lobes
    weight: np.ndarray  # f |cos| / pdf, or the lobe reflectance for delta lobes
    is_specular: bool


def eval_bsdf(material: Material, n, wo, wi) -> np.ndarray:
    """Point evaluation in sr^-1. Delta lobes evaluate to zero."""
    if material.kind != "lambertian":
        return np.zeros(3)
    if float(np.dot(n, wi)) <= 0.0 or float(np.dot(n, wo)) <= 0.0:
        return np.zeros(3)
    return np.asarray(material.color, dtype=np.float64) * INV_PI


def fresnel_dielectric(cos_i: float, eta: float) -> float:
    """Unpolarized Fresnel reflectance; eta = n_incident / n_transmitted."""
    return pk.fresnel_dielectric(float(cos_i), float(eta))[0]


def reflect_probability(material: Material, n, wo, front: bool = True) -> float:
    """Probability that :func:`sample_bsdf` takes the reflection branch."""
    if material.kind == "mirror":
        return 1.0
    if material.kind != "dielectric":
        return 0.0
    eta = 1.0 / material.ior if front else material.ior
    return fresnel_dielectric(float(np.dot(n, wo)), eta)


def sample_bsdf(material: Material, n, wo, u, front: bool = True) -> BsdfSample | None:
    """Sample wi with two uniforms ``u``. Returns None for absorbing emissive surfaces."""
    if material.kind == "emissive":
        return None
    n = [float(x) for x in n]
    wo = [float(x) for x in wo]
    s = pk.sample_bsdf(material.code, tuple(material.color), float(material.ior),
                       n[0], n[1], n[2], wo[0], wo[1], wo[2], bool(front), float(u[0]), float(u[1]))
    wi, pdf, w, spec = s
    return BsdfSample(np.array(wi), float(pdf), np.array(w, dtype=np.float64), bool(spec))


def balance_heuristic(pdf_a: float, pdf_b: float) -> float:
    """MIS weight of strategy a against b."""
    s = pdf_a + pdf_b
    return pdf_a / s if s > 0.0 else 0.0

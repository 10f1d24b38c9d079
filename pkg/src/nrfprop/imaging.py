"""Frame and map I/O, color conversion and binary morphology.

Frames are ``H x W x 3`` float64 arrays in [0, 1], scalar maps are ``H x W``
float64 arrays in [0, 1] and masks are ``H x W`` boolean arrays.
"""

from __future__ import annotations

import os

import numpy as np
from PIL import Image, UnidentifiedImageError
from scipy import ndimage

# D65 reference white and the sRGB -> XYZ matrix.
_D65 = np.array([0.95047, 1.0, 1.08883])
_RGB2XYZ = np.array(
    [
        [0.412453, 0.357580, 0.180423],
        [0.212671, 0.715160, 0.072169],
        [0.019334, 0.119193, 0.950227],
    ]
)
_DELTA = 6.0 / 29.0


def _open(path):
    if not os.path.isfile(path):
        raise FileNotFoundError(f"no such image: {path}")
    try:
        img = Image.open(path)
        img.load()
    except (UnidentifiedImageError, OSError) as exc:
        raise ValueError(f"cannot decode image {path}: {exc}") from exc
    if img.width == 0 or img.height == 0:
        raise ValueError(f"zero-sized image: {path}")
    return img


def load_frame(path) -> np.ndarray:
    """Read an 8-bit color image as an ``H x W x 3`` float array in [0, 1]."""
    img = _open(path)
    if img.mode not in ("RGB", "RGBA", "P", "L", "LA", "CMYK", "YCbCr"):
        raise ValueError(f"{path}: unsupported image mode {img.mode}")
    rgb = np.asarray(img.convert("RGB"), dtype=np.float64)
    return rgb / 255.0


def load_scalar_map(path, luminance: bool = False) -> np.ndarray:
    """Read an 8-bit grayscale map as float values ``intensity / 255``.

    Multi-channel files are rejected unless ``luminance`` is set, in which case
    they are reduced to their luma channel first.
    """
    img = _open(path)
    if img.mode == "L":
        pass
    elif img.mode == "1":
        img = img.convert("L")
    elif img.mode == "P" or len(img.getbands()) > 1:
        if not luminance:
            raise ValueError(
                f"{path}: expected a single-channel map, got mode {img.mode}"
            )
        img = img.convert("L")
    else:
        raise ValueError(f"{path}: expected an 8-bit map, got mode {img.mode}")
    return np.asarray(img, dtype=np.float64) / 255.0


def _to_uint8(values):
    return np.clip(np.floor(np.asarray(values, dtype=np.float64) * 255.0 + 0.5), 0, 255).astype(np.uint8)


def save_scalar_map(values, path) -> None:
    """Write a map as 8-bit grayscale, storing ``round(value * 255)``."""
    Image.fromarray(_to_uint8(values)).save(path)


def save_mask(mask, path) -> None:
    """Write a boolean mask as an 8-bit image with values 0 and 255."""
    data = np.where(np.asarray(mask, dtype=bool), 255, 0).astype(np.uint8)
    Image.fromarray(data).save(path)


def save_frame(frame, path) -> None:
    Image.fromarray(_to_uint8(frame)).save(path)


def save_label_map(labels, path) -> None:
    """Write a superpixel label map as a 16-bit grayscale PNG."""
    labels = np.asarray(labels)
    if labels.max(initial=0) > 0xFFFF:
        raise ValueError("label map does not fit into 16 bits")
    Image.fromarray(labels.astype(np.uint16)).save(path)


def resize_map(values, shape) -> np.ndarray:
    """Bilinearly resample a map to ``shape == (height, width)``."""
    values = np.asarray(values, dtype=np.float64)
    height, width = shape
    if values.shape == (height, width):
        return values
    img = Image.fromarray(values.astype(np.float32))
    out = np.asarray(img.resize((width, height), Image.BILINEAR), dtype=np.float64)
    return np.clip(out, 0.0, 1.0)


def _srgb_to_linear(rgb):
    return np.where(rgb <= 0.04045, rgb / 12.92, ((rgb + 0.055) / 1.055) ** 2.4)


def rgb_to_lab(rgb, rescale: bool = True) -> np.ndarray:
    """Convert sRGB values in [0, 1] to CIE L*a*b* (D65).

    Works on any array whose last axis has length 3. With ``rescale`` the
    result is mapped into [0, 1] as ``(L/100, (a+128)/255, (b+128)/255)``;
    otherwise raw L* in [0, 100] and signed a*, b* are returned.
    """
    rgb = np.asarray(rgb, dtype=np.float64)
    xyz = _srgb_to_linear(rgb) @ _RGB2XYZ.T / _D65
    f = np.where(
        xyz > _DELTA**3,
        np.cbrt(xyz),
        xyz / (3.0 * _DELTA**2) + 4.0 / 29.0,
    )
    fx, fy, fz = f[..., 0], f[..., 1], f[..., 2]
    lab = np.stack([116.0 * fy - 16.0, 500.0 * (fx - fy), 200.0 * (fy - fz)], axis=-1)
    if not rescale:
        return lab
    out = np.empty_like(lab)
    out[..., 0] = lab[..., 0] / 100.0
    out[..., 1:] = (lab[..., 1:] + 128.0) / 255.0
    return np.clip(out, 0.0, 1.0)


def rgb_to_hsv(rgb) -> np.ndarray:
    """Hexcone HSV with hue scaled to [0, 1); achromatic hue is 0."""
    rgb = np.asarray(rgb, dtype=np.float64)
    r, g, b = rgb[..., 0], rgb[..., 1], rgb[..., 2]
    v = rgb.max(axis=-1)
    chroma = v - rgb.min(axis=-1)
    safe_c = np.where(chroma > 0, chroma, 1.0)
    s = np.where(v > 0, chroma / np.where(v > 0, v, 1.0), 0.0)

    h = np.where(
        v == r,
        np.mod((g - b) / safe_c, 6.0),
        np.where(v == g, (b - r) / safe_c + 2.0, (r - g) / safe_c + 4.0),
    )
    h = np.where(chroma > 0, h / 6.0, 0.0)
    # mod can return exactly 6.0 for tiny negative inputs
    h = np.where(h >= 1.0, 0.0, h)
    return np.stack([h, s, v], axis=-1)


def disk(radius: int) -> np.ndarray:
    r = int(radius)
    yy, xx = np.mgrid[-r : r + 1, -r : r + 1]
    return xx**2 + yy**2 <= r * r


def morphological_close(mask, radius: int = 3) -> np.ndarray:
    """Dilate then erode with a disk of the given radius.

    The image is treated as embedded in an infinite empty plane, so the result
    always contains the input and a full mask stays full.
    """
    if radius < 1:
        raise ValueError("closing radius must be >= 1")
    mask = np.asarray(mask, dtype=bool)
    pad = int(radius) + 1
    padded = np.pad(mask, pad, mode="constant", constant_values=False)
    se = disk(radius)
    closed = ndimage.binary_erosion(ndimage.binary_dilation(padded, se), se)
    return closed[pad:-pad, pad:-pad]

"""
图像文件读写

只支持无损格式:
    - PNG: 8 位灰度 / 灰度+alpha / 调色板 / RGB / RGBA (读)，RGB 与 8/16 位灰度 (写)
    - PPM P3/P6、PGM P2/P5，maxval 必须为 255

扩展名与文件头魔数都能识别时二者必须一致。所有错误信息都包含文件路径。
"""

import io
import re
from pathlib import Path
from typing import Optional, Tuple, Union

import numpy as np
from loguru import logger
from PIL import Image, UnidentifiedImageError
from PIL.PngImagePlugin import PngInfo

from .pipeline import EdgeMap, ResponseMap, RgbImage
from .vos_core import RESPONSE_CEILING

PathLike = Union[str, Path]

PNG_SIGNATURE = b"\x89PNG\r\n\x1a\n"
PNM_EXTENSIONS = (".ppm", ".pgm", ".pnm")
PROVENANCE_KEY = "provenance"
EDGE_LEVEL = 128

# 魔数 -> (通道数, 是否 ASCII)
_PNM_KINDS = {b"P2": (1, True), b"P3": (3, True), b"P5": (1, False), b"P6": (3, False)}
_COMMENT = re.compile(rb"#[^\r\n]*")


class ImageIOError(Exception):
    def __init__(self, path: PathLike, message: str):
        self.path = str(path)
        super().__init__(f"{path}: {message}")


class ImageNotFoundError(ImageIOError):
    pass


class UnsupportedFormatError(ImageIOError):
    pass


class MalformedHeaderError(ImageIOError):
    pass


class TruncatedDataError(ImageIOError):
    pass


class MalformedPixelDataError(ImageIOError):
    pass


# ============================================================
# 格式识别
# ============================================================

def _format_from_extension(path: Path) -> Optional[str]:
    suffix = path.suffix.lower()
    if suffix == ".png":
        return "png"
    if suffix in PNM_EXTENSIONS:
        return "pnm"
    return None


def _format_from_magic(data: bytes) -> Optional[str]:
    if data.startswith(PNG_SIGNATURE):
        return "png"
    if len(data) >= 2 and data[:1] == b"P" and data[1:2] in b"1234567":
        return "pnm"
    return None


def detect_format(path: PathLike, data: bytes) -> str:
    """按扩展名与魔数确定格式 ("png" / "pnm")。"""
    path = Path(path)
    by_ext = _format_from_extension(path)
    by_magic = _format_from_magic(data)
    if by_ext and by_magic and by_ext != by_magic:
        raise UnsupportedFormatError(path, f"扩展名 {path.suffix} 与文件内容 ({by_magic}) 不一致")
    if by_magic:
        return by_magic
    if by_ext:
        raise MalformedHeaderError(path, f"文件头不是有效的 {by_ext.upper()} 魔数")
    raise UnsupportedFormatError(path, "无法识别的图像格式 (仅支持 PNG / PPM / PGM)")


# ============================================================
# PPM / PGM
# ============================================================

def _read_pnm_header(path: Path, data: bytes) -> Tuple[bytes, int, int, int, int]:
    """解析 PNM 头，返回 (magic, width, height, maxval, 像素数据起始偏移)。"""
    magic = data[:2]
    if magic not in _PNM_KINDS:
        raise UnsupportedFormatError(path, f"不支持的 PNM 类型 {magic.decode('ascii', 'replace')}")

    tokens = []
    pos = 2
    while len(tokens) < 3:
        while pos < len(data):
            c = data[pos:pos + 1]
            if c.isspace():
                pos += 1
            elif c == b"#":
                end = data.find(b"\n", pos)
                pos = len(data) if end < 0 else end + 1
            else:
                break
        if pos >= len(data):
            raise MalformedHeaderError(path, "文件头不完整")
        start = pos
        while pos < len(data) and not data[pos:pos + 1].isspace() and data[pos:pos + 1] != b"#":
            pos += 1
        tokens.append(data[start:pos])

    try:
        width, height, maxval = (int(t.decode("ascii")) for t in tokens)
    except (UnicodeDecodeError, ValueError):
        raise MalformedHeaderError(path, f"文件头字段不是整数: {tokens!r}")
    if width < 1 or height < 1:
        raise MalformedHeaderError(path, f"图像尺寸必须为正: {width}x{height}")
    if not 1 <= maxval <= 65535:
        raise MalformedHeaderError(path, f"maxval 非法: {maxval}")
    if maxval != 255:
        raise UnsupportedFormatError(path, f"仅支持 maxval 255，实际为 {maxval}")

    # maxval 之后恰好一个空白字符
    if pos < len(data):
        if not data[pos:pos + 1].isspace():
            raise MalformedHeaderError(path, "maxval 之后缺少空白分隔符")
        pos += 1
    return magic, width, height, maxval, pos


def _decode_pnm(path: Path, data: bytes) -> np.ndarray:
    magic, width, height, maxval, offset = _read_pnm_header(path, data)
    channels, ascii_raster = _PNM_KINDS[magic]
    count = width * height * channels

    if ascii_raster:
        tokens = _COMMENT.sub(b" ", data[offset:]).split()
        if len(tokens) < count:
            raise TruncatedDataError(path, f"像素数据不足: 需要 {count} 个值，实际 {len(tokens)} 个")
        if len(tokens) > count:
            raise MalformedPixelDataError(path, f"像素数据多出 {len(tokens) - count} 个值")
        try:
            values = np.array([int(t.decode("ascii")) for t in tokens], dtype=np.int64)
        except (UnicodeDecodeError, ValueError):
            raise MalformedPixelDataError(path, "像素数据包含非整数值")
        if values.min() < 0 or values.max() > maxval:
            raise MalformedPixelDataError(path, f"像素值超出 [0, {maxval}]")
        raster = values.astype(np.uint8)
    else:
        available = len(data) - offset
        if available < count:
            raise TruncatedDataError(path, f"像素数据不足: 需要 {count} 字节，实际 {available} 字节")
        raster = np.frombuffer(data, dtype=np.uint8, count=count, offset=offset)

    raster = raster.reshape(height, width, channels)
    if channels == 1:
        raster = np.repeat(raster, 3, axis=2)
    return raster


def _encode_pnm(magic: bytes, raster: np.ndarray, comment: Optional[str] = None) -> bytes:
    height, width = raster.shape[:2]
    header = magic + b"\n"
    if comment:
        header += f"# {comment}\n".encode("utf-8")
    header += f"{width} {height}\n255\n".encode("ascii")
    return header + np.ascontiguousarray(raster, dtype=np.uint8).tobytes()


# ============================================================
# PNG
# ============================================================

def _decode_png(path: Path, data: bytes) -> np.ndarray:
    # IHDR: 签名 8 字节 + 长度 4 + 类型 4 + 宽 4 + 高 4，随后是位深与颜色类型
    if len(data) < 26 or data[12:16] != b"IHDR":
        raise MalformedHeaderError(path, "PNG 缺少 IHDR 块")
    bit_depth = data[24]
    if bit_depth > 8:
        raise UnsupportedFormatError(path, f"仅支持 8 位 PNG，实际位深 {bit_depth}")

    try:
        im = Image.open(io.BytesIO(data))
    except (UnidentifiedImageError, SyntaxError, ValueError) as e:
        raise MalformedHeaderError(path, f"PNG 头解析失败: {e}")
    try:
        im.load()
    except OSError as e:
        raise TruncatedDataError(path, f"PNG 像素数据不完整: {e}")
    except (SyntaxError, ValueError) as e:
        raise MalformedPixelDataError(path, f"PNG 像素数据损坏: {e}")

    if im.mode not in ("1", "L", "LA", "P", "PA", "RGB", "RGBA"):
        raise UnsupportedFormatError(path, f"不支持的 PNG 颜色模式 {im.mode}")
    return np.asarray(im.convert("RGB"), dtype=np.uint8)


# ============================================================
# 公共接口
# ============================================================

def _read_bytes(path: Path) -> bytes:
    if not path.is_file():
        raise ImageNotFoundError(path, "文件不存在")
    try:
        return path.read_bytes()
    except OSError as e:
        raise ImageIOError(path, f"读取失败: {e}")


def _decode(path: PathLike) -> np.ndarray:
    """读取任意支持格式，返回形状 (H, W, 3) 的 uint8 数组。"""
    path = Path(path)
    data = _read_bytes(path)
    fmt = detect_format(path, data)
    raster = _decode_png(path, data) if fmt == "png" else _decode_pnm(path, data)
    logger.debug(f"已读取 {fmt} 图像 {path}: {raster.shape[1]}x{raster.shape[0]}")
    return raster


def _write_bytes(path: Path, payload: bytes):
    try:
        path.write_bytes(payload)
    except OSError as e:
        raise ImageIOError(path, f"写入失败: {e}")


def _save_pillow(im: Image.Image, path: Path, pnginfo: Optional[PngInfo] = None):
    try:
        im.save(path, format="PNG", pnginfo=pnginfo)
    except OSError as e:
        raise ImageIOError(path, f"写入失败: {e}")


def _output_format(path: Path, allowed: Tuple[str, ...]) -> str:
    suffix = path.suffix.lower()
    if suffix not in allowed:
        raise UnsupportedFormatError(path, f"不支持的输出扩展名 '{suffix}'，可选: {', '.join(allowed)}")
    return suffix


def load_image(path: PathLike) -> RgbImage:
    """读取图像为 RgbImage；灰度复制到三个通道，alpha 丢弃。"""
    return RgbImage(_decode(path).astype(np.float64))


def save_image(img: RgbImage, path: PathLike):
    """把 RgbImage 写成 PNG 或 PPM (P6)，通道值四舍五入 (半数进位)。"""
    path = Path(path)
    suffix = _output_format(path, (".png",) + PNM_EXTENSIONS)
    raster = np.floor(img.pixels + 0.5).clip(0, 255).astype(np.uint8)
    if suffix == ".png":
        _save_pillow(Image.fromarray(raster), path)
    else:
        _write_bytes(path, _encode_pnm(b"P6", raster))
    logger.debug(f"已写入图像 {path}")


def save_edge_map(em: EdgeMap, path: PathLike, provenance: Optional[str] = None):
    """
    写出 8 位单通道边缘图 (边缘 255，非边缘 0)。

    Args:
        em: 边缘图
        path: .png 或 .pgm
        provenance: 可选的来源描述，写入 PNG tEXt 块或 PGM 头注释
    """
    path = Path(path)
    suffix = _output_format(path, (".png", ".pgm"))
    raster = np.where(em.edge, 255, 0).astype(np.uint8)
    comment = " ".join(provenance.split()) if provenance else None

    if suffix == ".png":
        info = None
        if comment:
            info = PngInfo()
            info.add_text(PROVENANCE_KEY, comment)
        _save_pillow(Image.fromarray(raster), path, info)
    else:
        _write_bytes(path, _encode_pnm(b"P5", raster, f"{PROVENANCE_KEY}: {comment}" if comment else None))
    logger.debug(f"已写入边缘图 {path}: {em.count()} 个边缘像素")


def load_edge_map(path: PathLike) -> EdgeMap:
    """读取边缘图，任一通道 >= 128 的像素为边缘。"""
    return EdgeMap(_decode(path).max(axis=2) >= EDGE_LEVEL)


def read_provenance(path: PathLike) -> Optional[str]:
    """读取 save_edge_map 写入的来源描述，没有时返回 None。"""
    path = Path(path)
    data = _read_bytes(path)
    if detect_format(path, data) == "png":
        try:
            with Image.open(io.BytesIO(data)) as im:
                return getattr(im, "text", {}).get(PROVENANCE_KEY)
        except (UnidentifiedImageError, SyntaxError, OSError, ValueError):
            return None
    prefix = f"# {PROVENANCE_KEY}: ".encode("utf-8")
    for line in data.split(b"\n")[1:4]:
        if line.startswith(prefix):
            return line[len(prefix):].decode("utf-8", "replace")
    return None


def scale_responses(response: np.ndarray) -> np.ndarray:
    """响应值从 [0, 441.673] 线性映射到 [0, 65535]，半数进位。"""
    scaled = np.floor(65535.0 * (response / RESPONSE_CEILING) + 0.5)
    return scaled.clip(0, 65535).astype(np.uint16)


def save_response_map(rm: ResponseMap, path: PathLike):
    """响应图写成 16 位灰度 PNG；扩展名为 .csv 时写出精确实数值。"""
    path = Path(path)
    suffix = _output_format(path, (".png", ".csv"))
    if suffix == ".csv":
        try:
            np.savetxt(path, rm.response, fmt="%.17g", delimiter=",")
        except OSError as e:
            raise ImageIOError(path, f"写入失败: {e}")
    else:
        _save_pillow(Image.fromarray(scale_responses(rm.response)), path)
    logger.debug(f"已写入响应图 {path}")

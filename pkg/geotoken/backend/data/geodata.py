"""
地理令牌系统 - 数据集生成与序列化
/geotoken/backend/data/geodata.py

样本格式:
    输入 "46.4157,21.0756+-0.0424,0.0132"  (起点纬度,经度 + 纬度位移,经度位移)
    输出 形如 "36224.102" 的大圆距离 (米, 三位小数)
"""
import json
import math
import re
from pathlib import Path
from typing import List, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from geotoken.backend.encoding.spherical import degrees_to_radians
from geotoken.backend.errors import DomainError, ParseError, SchemaError

EARTH_RADIUS_M = 6371000.0
COORD_DECIMALS = 4
DISTANCE_DECIMALS = 3
MAX_DISPLACEMENT_DEG = 10.0
# 浮点相加可能让 89.9999 + 0.0001 略超 90
_LAT_TOLERANCE = 1e-9

SAMPLE_KEYS = ("lat_deg", "lon_deg", "dlat_deg", "dlon_deg", "distance_m", "input_text", "target_text")

_INPUT_PATTERN = re.compile(
    r"^(-?\d+\.\d{4}),(-?\d+\.\d{4})\+(-?\d+\.\d{4}),(-?\d+\.\d{4})$"
)


def _check_latitude(lat: float) -> None:
    if not -90.0 - _LAT_TOLERANCE <= lat <= 90.0 + _LAT_TOLERANCE:
        raise DomainError(f"latitude {lat} outside [-90, 90]")


def wrap_longitude_deg(lon: float) -> float:
    """经度回绕到 [-180, 180)"""
    wrapped = ((lon + 180.0) % 360.0) - 180.0
    return wrapped - 360.0 if wrapped >= 180.0 else wrapped


def haversine(lat1: float, lon1: float, lat2: float, lon2: float) -> float:
    """
    半正矢公式计算球面大圆距离

    Args:
        lat1, lon1: 起点经纬度（角度）
        lat2, lon2: 终点经纬度（角度）

    Returns:
        距离（米）, 地球半径取 6371000 m
    """
    _check_latitude(lat1)
    _check_latitude(lat2)
    phi1, phi2 = degrees_to_radians(lat1), degrees_to_radians(lat2)
    dphi = phi2 - phi1
    dlam = degrees_to_radians(lon2) - degrees_to_radians(lon1)
    a = math.sin(dphi / 2) ** 2 + math.cos(phi1) * math.cos(phi2) * math.sin(dlam / 2) ** 2
    a = min(1.0, max(0.0, a))
    return EARTH_RADIUS_M * 2.0 * math.atan2(math.sqrt(a), math.sqrt(1.0 - a))


class GeoSample(BaseModel):
    """一条实验样本"""
    model_config = ConfigDict(frozen=True)

    lat_deg: float = Field(ge=-90, le=90)
    lon_deg: float = Field(ge=-180, lt=180)
    dlat_deg: float = Field(gt=-MAX_DISPLACEMENT_DEG, lt=MAX_DISPLACEMENT_DEG)
    dlon_deg: float = Field(gt=-MAX_DISPLACEMENT_DEG, lt=MAX_DISPLACEMENT_DEG)
    distance_m: float = Field(ge=0)
    input_text: str
    target_text: str

    @model_validator(mode="after")
    def _check_destination(self) -> "GeoSample":
        if abs(self.lat_deg + self.dlat_deg) > 90.0 + _LAT_TOLERANCE:
            raise ValueError("destination latitude outside [-90, 90]")
        return self

    @property
    def destination(self) -> Tuple[float, float]:
        """终点（纬度直接相加, 经度回绕）"""
        return self.lat_deg + self.dlat_deg, wrap_longitude_deg(self.lon_deg + self.dlon_deg)


def _quantize(value: float, decimals: int = COORD_DECIMALS) -> float:
    # +0.0 消除 -0.0
    return round(value, decimals) + 0.0


def _fixed(value: float, decimals: int) -> str:
    text = f"{value:.{decimals}f}"
    if text.startswith("-") and float(text) == 0.0:
        text = text[1:]
    return text


def format_sample(sample: GeoSample) -> Tuple[str, str]:
    """序列化为样本文本, 返回 (输入文本, 目标文本)"""
    input_text = (
        f"{_fixed(sample.lat_deg, COORD_DECIMALS)},{_fixed(sample.lon_deg, COORD_DECIMALS)}"
        f"+{_fixed(sample.dlat_deg, COORD_DECIMALS)},{_fixed(sample.dlon_deg, COORD_DECIMALS)}"
    )
    return input_text, _fixed(sample.distance_m, DISTANCE_DECIMALS)


def parse_input_text(text: str) -> Tuple[float, float, float, float]:
    """format_sample 的逆运算, 返回 (lat, lon, dlat, dlon)"""
    match = _INPUT_PATTERN.match(text)
    if not match:
        raise ParseError(f"malformed sample text: {text!r}")
    lat, lon, dlat, dlon = (float(g) for g in match.groups())
    return lat, lon, dlat, dlon


def make_sample(lat_deg: float, lon_deg: float, dlat_deg: float, dlon_deg: float) -> GeoSample:
    """按 4 位小数量化坐标, 计算距离并生成文本"""
    lat = _quantize(lat_deg)
    lon = _quantize(wrap_longitude_deg(lon_deg))
    if lon >= 180.0:
        lon -= 360.0
    dlat = _quantize(dlat_deg)
    dlon = _quantize(dlon_deg)
    lat2 = lat + dlat
    _check_latitude(lat2)
    distance = haversine(lat, lon, lat2, wrap_longitude_deg(lon + dlon))
    draft = GeoSample.model_construct(
        lat_deg=lat, lon_deg=lon, dlat_deg=dlat, dlon_deg=dlon,
        distance_m=distance, input_text="", target_text=""
    )
    input_text, target_text = format_sample(draft)
    return GeoSample(
        lat_deg=lat, lon_deg=lon, dlat_deg=dlat, dlon_deg=dlon,
        distance_m=distance, input_text=input_text, target_text=target_text
    )


def generate_dataset(n: int, seed: int, max_disp_deg: float = MAX_DISPLACEMENT_DEG) -> List[GeoSample]:
    """
    生成随机样本

    纬度 U[-90, 90], 经度 U[-180, 180), 位移 U(-max, max);
    终点纬度越过极点时整组重新抽样。同一种子结果完全一致。
    """
    if n < 1:
        raise DomainError(f"dataset size must be >= 1, got {n}")
    if not 0 < max_disp_deg <= MAX_DISPLACEMENT_DEG:
        raise DomainError(f"max displacement must be in (0, {MAX_DISPLACEMENT_DEG}]")
    rng = np.random.default_rng(seed)
    samples: List[GeoSample] = []
    while len(samples) < n:
        lat, lon, dlat, dlon = (
            float(rng.uniform(-90.0, 90.0)),
            float(rng.uniform(-180.0, 180.0)),
            float(rng.uniform(-max_disp_deg, max_disp_deg)),
            float(rng.uniform(-max_disp_deg, max_disp_deg)),
        )
        dlat_q, dlon_q = _quantize(dlat), _quantize(dlon)
        if abs(dlat_q) >= max_disp_deg or abs(dlon_q) >= max_disp_deg:
            continue
        if abs(_quantize(lat) + dlat_q) > 90.0 + _LAT_TOLERANCE:
            continue
        samples.append(make_sample(lat, lon, dlat, dlon))
    return samples


# ============ JSONL 读写 ============

def write_jsonl(samples: List[GeoSample], path: Union[str, Path]) -> Path:
    """每行一个 JSON 对象, 浮点数按 repr 完整保存"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for sample in samples:
            f.write(json.dumps(sample.model_dump(), ensure_ascii=False) + "\n")
    return path


def read_jsonl(path: Union[str, Path]) -> List[GeoSample]:
    """读取 JSONL 数据集, 校验字段与一致性"""
    samples: List[GeoSample] = []
    with open(path, "r", encoding="utf-8") as f:
        for line_no, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as e:
                raise SchemaError(f"invalid JSON: {e.msg}", line=line_no) from None
            if not isinstance(record, dict):
                raise SchemaError("expected a JSON object", line=line_no)
            for key in SAMPLE_KEYS:
                if key not in record:
                    raise SchemaError(f"missing key '{key}'", key=key, line=line_no)
            try:
                sample = GeoSample.model_validate(record)
            except ValidationError as e:
                first = e.errors()[0]
                key = ".".join(str(p) for p in first["loc"]) or None
                raise SchemaError(f"invalid value for '{key}': {first['msg']}", key=key, line=line_no) from None

            input_text, target_text = format_sample(sample)
            if (input_text, target_text) != (sample.input_text, sample.target_text):
                raise SchemaError("text fields do not match the coordinates", key="input_text", line=line_no)
            lat2, lon2 = sample.destination
            if sample.distance_m != haversine(sample.lat_deg, sample.lon_deg, lat2, lon2):
                raise SchemaError("distance does not match the coordinates", key="distance_m", line=line_no)
            samples.append(sample)
    return samples

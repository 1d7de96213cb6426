"""Physical-region inference from round-trip times.

A reply's minimum RTT bounds the distance between vantage and target by the
speed of light in fiber; every country with a representative point inside
that radius stays feasible. The vantage's own country is always feasible,
since the disk is centered there.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from importlib import resources
from typing import IO, Iterable, Mapping

from .errors import NegativeRtt, NoResponses
from .registry import RegionMap, Rir, data_lines

EARTH_RADIUS_KM = 6371.0088
C_KM_PER_S = 299792.458
DEFAULT_PROPAGATION_FACTOR = 2.0 / 3.0


def haversine_km(lat1: float, lon1: float, lat2: float, lon2: float) -> float:
    """Great-circle distance in km on the mean-radius sphere."""
    p1, p2 = math.radians(lat1), math.radians(lat2)
    dp = p2 - p1
    dl = math.radians(lon2 - lon1)
    a = math.sin(dp / 2.0) ** 2 + math.cos(p1) * math.cos(p2) * math.sin(dl / 2.0) ** 2
    return 2.0 * EARTH_RADIUS_KM * math.asin(math.sqrt(a))


def rtt_to_radius_km(rtt_ms: float, propagation_factor: float = DEFAULT_PROPAGATION_FACTOR) -> float:
    """Upper bound on vantage-target distance for a round-trip time.

    One-way time is rtt/2; signals cover at most factor * c in that time."""
    if rtt_ms < 0:
        raise NegativeRtt(f"rtt {rtt_ms} ms")
    if not 0 < propagation_factor <= 1:
        raise ValueError(f"propagation factor {propagation_factor} outside (0, 1]")
    return (rtt_ms / 1000.0) / 2.0 * propagation_factor * C_KM_PER_S


CountryPoints = Mapping[str, tuple[tuple[float, float], ...]]


def load_country_points(fp: IO[str]) -> dict[str, tuple[tuple[float, float], ...]]:
    """Load representative points from CSV with a country,lat,lon header."""
    reader = csv.DictReader(data_lines(fp))
    want = ["country", "lat", "lon"]
    if reader.fieldnames is None or [f.strip() for f in reader.fieldnames] != want:
        raise ValueError(f"country points need a country,lat,lon header, got {reader.fieldnames}")
    acc: dict[str, list[tuple[float, float]]] = {}
    for row in reader:
        cc = row["country"].strip().upper()
        lat, lon = float(row["lat"]), float(row["lon"])
        if not (-90 <= lat <= 90 and -180 <= lon <= 180):
            raise ValueError(f"point out of range for {cc}: {lat},{lon}")
        acc.setdefault(cc, []).append((lat, lon))
    return {cc: tuple(points) for cc, points in acc.items()}


def default_country_points() -> dict[str, tuple[tuple[float, float], ...]]:
    ref = resources.files("geoaudit.data").joinpath("country_points.csv")
    with ref.open("r", encoding="utf-8") as fp:
        return load_country_points(fp)


def check_point_coverage(points: CountryPoints, region_map: RegionMap) -> None:
    """Every mapped country needs at least one representative point."""
    missing = [cc for cc in region_map if cc not in points or not points[cc]]
    if missing:
        raise ValueError(f"countries without representative points: {missing}")


@dataclass(frozen=True)
class GeoConfig:
    country_points: CountryPoints
    propagation_factor: float = DEFAULT_PROPAGATION_FACTOR


def min_rtt(results: Iterable) -> tuple[str, float]:
    """Pick the smallest RTT across measurement results.

    Returns (vantage_id, rtt_ms); ties go to the lower vantage id. Raises
    NoResponses when nothing replied."""
    best: tuple[float, str] | None = None
    for res in results:
        if not res.rtts_ms:
            continue
        low = min(res.rtts_ms)
        if low < 0:
            raise NegativeRtt(f"rtt {low} ms from {res.vantage_id}")
        cand = (low, res.vantage_id)
        if best is None or cand < best:
            best = cand
    if best is None:
        raise NoResponses("no replies in batch")
    return best[1], best[0]


def feasible_countries(
    vantage_lat: float,
    vantage_lon: float,
    radius_km: float,
    config: GeoConfig,
    vantage_country: str | None = None,
) -> frozenset[str]:
    """Countries with any representative point within radius of the vantage.

    The vantage's own country is always included: the disk center lies in it
    regardless of where its representative points sit."""
    out = set()
    if vantage_country:
        out.add(vantage_country)
    for cc, points in config.country_points.items():
        if cc in out:
            continue
        for lat, lon in points:
            if haversine_km(vantage_lat, vantage_lon, lat, lon) <= radius_km:
                out.add(cc)
                break
    return frozenset(out)


def feasible_rirs(countries: Iterable[str], region_map: RegionMap) -> frozenset[Rir]:
    """Map feasible countries onto registries, skipping unmapped codes."""
    return frozenset(region_map.rir_of(cc) for cc in countries if cc in region_map)


@dataclass(frozen=True)
class FeasibleRegion:
    vantage_id: str
    rtt_ms: float
    radius_km: float
    countries: frozenset[str]
    rirs: frozenset[Rir]


def infer_region(
    results: Iterable,
    vantages_by_id: Mapping[str, "object"],
    config: GeoConfig,
    region_map: RegionMap,
) -> FeasibleRegion:
    """Full inference for one target: min RTT, radius, feasible countries
    and registries, all from the minimum-RTT vantage's disk."""
    vid, rtt = min_rtt(results)
    vantage = vantages_by_id[vid]
    radius = rtt_to_radius_km(rtt, config.propagation_factor)
    countries = feasible_countries(vantage.lat, vantage.lon, radius, config, vantage.country)
    return FeasibleRegion(
        vantage_id=vid,
        rtt_ms=rtt,
        radius_km=radius,
        countries=countries,
        rirs=feasible_rirs(countries, region_map),
    )

"""Shared fixture builders: a synthetic measurement campaign with planted
ground truth, written out as the file set the CLI consumes."""

from __future__ import annotations

import ipaddress
import json
from dataclasses import dataclass, field

import pytest

from geoaudit.registry import RIR_ORDER, Rir

# Three single-point countries per registry region, in tight clusters.
# Cluster separations are several thousand km, so bounded additive noise can
# never make a foreign region feasible.
CLUSTERS: dict[Rir, list[tuple[str, float, float]]] = {
    Rir.ARIN: [("US", 40.0, -100.0), ("CA", 42.0, -100.0), ("BM", 38.0, -100.0)],
    Rir.RIPE: [("DE", 50.0, 10.0), ("FR", 48.0, 10.0), ("PL", 52.0, 10.0)],
    Rir.APNIC: [("JP", 35.0, 140.0), ("AU", 33.0, 140.0), ("IN", 37.0, 140.0)],
    Rir.LACNIC: [("BR", -20.0, -60.0), ("AR", -22.0, -60.0), ("CL", -18.0, -60.0)],
    Rir.AFRINIC: [("ZA", 0.0, 25.0), ("EG", 2.0, 25.0), ("NG", -2.0, 25.0)],
}

CLASS_PATTERN = ("FC", "OC", "OI", "RI", "FI")


@dataclass
class Campaign:
    """Planted ground truth plus every input file's content."""

    region_map_csv: str = ""
    country_points_csv: str = ""
    vantages_jsonl: str = ""
    registrations_jsonl: str = ""
    rib_txt: str = ""
    hitlist_v4_csv: str = ""
    hitlist_v6_txt: str = ""
    world: dict = field(default_factory=dict)
    expected: dict[str, str] = field(default_factory=dict)  # prefix -> class
    true_region: dict[str, str] = field(default_factory=dict)  # prefix -> RIR name


def build_campaign(
    fc_per_region: int = 40,
    planted_per_class: int = 2,
    v6_fc_per_region: int = 2,
    noise_ms: float = 0.0,
) -> Campaign:
    camp = Campaign()

    rows = [f"{cc},{rir.value}" for rir, pts in CLUSTERS.items() for cc, _, _ in pts]
    camp.region_map_csv = "country,rir\n" + "\n".join(sorted(rows)) + "\n"
    pts = [f"{cc},{lat},{lon}" for pts in CLUSTERS.values() for cc, lat, lon in pts]
    camp.country_points_csv = "country,lat,lon\n" + "\n".join(sorted(pts)) + "\n"

    vantages = []
    asn = 64500
    for rir in RIR_ORDER:
        for cc, lat, lon in CLUSTERS[rir]:
            vantages.append({"id": f"a-{cc.lower()}", "kind": "anchor", "country": cc,
                             "lat": lat, "lon": lon, "asn": asn, "connected": True})
            vantages.append({"id": f"p-{cc.lower()}", "kind": "probe", "country": cc,
                             "lat": lat, "lon": lon, "asn": asn + 1, "connected": True})
            asn += 2
    camp.vantages_jsonl = "\n".join(json.dumps(v, sort_keys=True) for v in vantages) + "\n"

    regs = []
    rib = []
    hits4 = ["addr,score"]
    hits6 = []
    world_targets: dict[str, list[float]] = {}

    def plant(prefix: str, target: str, rir: Rir, org_cc: str,
              true_pt: tuple[str, float, float], cls: str, year: int) -> None:
        regs.append({
            "prefix": prefix, "rir": rir.value, "org_country": org_cc,
            "org_id": f"ORG-{org_cc}-{len(regs)}", "status": "assigned",
            "last_updated": f"{year}-06-01", "flags": [],
        })
        rib.append(f"{prefix} {65000 + len(rib)}")
        world_targets[target] = [true_pt[1], true_pt[2]]
        camp.expected[prefix] = cls
        camp.true_region[prefix] = next(
            r.value for r, pts in CLUSTERS.items() if any(c == true_pt[0] for c, _, _ in pts))

    for i, rir in enumerate(RIR_ORDER):
        other = RIR_ORDER[(i + 1) % 5]
        third = RIR_ORDER[(i + 2) % 5]
        total = fc_per_region + 4 * planted_per_class
        for k in range(total):
            prefix = f"10.{10 + i}.{k}.0/24"
            target = f"10.{10 + i}.{k}.1"
            home = CLUSTERS[rir][k % 3]
            away = CLUSTERS[other][k % 3]
            far = CLUSTERS[third][k % 3]
            if k < fc_per_region:
                cls = "FC"
            else:
                cls = CLASS_PATTERN[1 + (k - fc_per_region) // planted_per_class]
            if cls == "FC":
                org_cc, true_pt = home[0], home
            elif cls == "OC":
                org_cc, true_pt = away[0], away
            elif cls == "OI":
                org_cc, true_pt = away[0], home
            elif cls == "RI":
                org_cc, true_pt = home[0], far
            else:  # FI
                org_cc, true_pt = away[0], far
            plant(prefix, target, rir, org_cc, true_pt, cls, 2016 + k % 8)
            hits4.append(f"{target},100")
        for k in range(v6_fc_per_region):
            prefix = str(ipaddress.ip_network(f"2001:db8:{10 + i}:{k}::/64"))
            target = str(ipaddress.ip_address(f"2001:db8:{10 + i}:{k}::1"))
            home = CLUSTERS[rir][k % 3]
            plant(prefix, target, rir, home[0], home, "FC", 2020)
            hits6.append(target)

    camp.registrations_jsonl = "\n".join(json.dumps(r, sort_keys=True) for r in regs) + "\n"
    camp.rib_txt = "# synthetic table\n" + "\n".join(rib) + "\n"
    camp.hitlist_v4_csv = "\n".join(hits4) + "\n"
    camp.hitlist_v6_txt = "\n".join(hits6) + "\n" if hits6 else ""
    camp.world = {
        "noise_ms": noise_ms,
        "propagation_factor": 2.0 / 3.0,
        "targets": world_targets,
        "unresponsive": [],
    }
    return camp


def write_campaign(tmp_path, camp: Campaign) -> dict[str, str]:
    """Materialize campaign files; returns name -> path."""
    files = {
        "region_map.csv": camp.region_map_csv,
        "country_points.csv": camp.country_points_csv,
        "vantages.jsonl": camp.vantages_jsonl,
        "registrations.jsonl": camp.registrations_jsonl,
        "rib.txt": camp.rib_txt,
        "hitlist_v4.csv": camp.hitlist_v4_csv,
        "world.json": json.dumps(camp.world, sort_keys=True),
    }
    if camp.hitlist_v6_txt:
        files["hitlist_v6.txt"] = camp.hitlist_v6_txt
    out = {}
    for name, content in files.items():
        path = tmp_path / name
        path.write_text(content)
        out[name] = str(path)
    return out


def audit_argv(paths: dict[str, str], out_path: str, extra: list[str] | None = None) -> list[str]:
    argv = [
        "audit",
        "--registrations", paths["registrations.jsonl"],
        "--rib", paths["rib.txt"],
        "--hitlist-v4", paths["hitlist_v4.csv"],
        "--vantages", paths["vantages.jsonl"],
        "--region-map", paths["region_map.csv"],
        "--country-points", paths["country_points.csv"],
        "--backend", "simulate",
        "--world", paths["world.json"],
        "--seed", "7",
        "-o", out_path,
    ]
    if "hitlist_v6.txt" in paths:
        argv += ["--hitlist-v6", paths["hitlist_v6.txt"]]
    if extra:
        argv += extra
    return argv


@pytest.fixture
def small_campaign(tmp_path):
    camp = build_campaign(fc_per_region=4, planted_per_class=1, v6_fc_per_region=1)
    paths = write_campaign(tmp_path, camp)
    return camp, paths, tmp_path

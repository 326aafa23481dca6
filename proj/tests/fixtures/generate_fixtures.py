#!/usr/bin/env python3
"""Writes the bundled synthetic cities used by the test suite.

town/  one ~2 km^2 town with a hand-classified element list and a manifest
twin/  two towns (alpha, beta) with stations planted in feature-dense cells

Outputs are committed; rerun only when the fixture design changes.
Golden cell counts come from the python h3 bindings; the chosen-cell count
vector is computed with shapely against the h3 cell boundary.
"""

import csv
import io
import json
import math
import random
from pathlib import Path

import h3
from shapely.geometry import LineString, Point, Polygon as SPolygon

HERE = Path(__file__).resolve().parent
OSM_BASE = "2021-05-01T00:00:00Z"

M_PER_DEG_LAT = 111_132.0


def m_per_deg_lon(lat):
    return 111_320.0 * math.cos(math.radians(lat))


class Frame:
    """Local metric offsets around a center."""

    def __init__(self, lat, lon):
        self.lat, self.lon = lat, lon

    def at(self, east_m, north_m):
        return (round(self.lat + north_m / M_PER_DEG_LAT, 7),
                round(self.lon + east_m / m_per_deg_lon(self.lat), 7))


def square(frame, e, n, half):
    pts = [frame.at(e - half, n - half), frame.at(e + half, n - half),
           frame.at(e + half, n + half), frame.at(e - half, n + half)]
    return pts + [pts[0]]


class Osm:
    def __init__(self, first_id):
        self.next_id = first_id
        self.elements = []

    def _id(self):
        self.next_id += 1
        return self.next_id

    def node(self, pt, tags):
        el = {"type": "node", "id": self._id(), "lat": pt[0], "lon": pt[1], "tags": tags}
        self.elements.append(el)
        return el

    def way(self, pts, tags):
        el = {"type": "way", "id": self._id(),
              "geometry": [{"lat": p[0], "lon": p[1]} for p in pts], "tags": tags}
        self.elements.append(el)
        return el

    def multipolygon(self, outer, inner, tags):
        members = [{"type": "way", "ref": self._id(), "role": "outer",
                    "geometry": [{"lat": p[0], "lon": p[1]} for p in outer]},
                   {"type": "way", "ref": self._id(), "role": "inner",
                    "geometry": [{"lat": p[0], "lon": p[1]} for p in inner]}]
        el = {"type": "relation", "id": self._id(), "members": members,
              "tags": dict(tags, type="multipolygon")}
        self.elements.append(el)
        return el

    def dump(self):
        doc = {"version": 0.6, "generator": "fixture",
               "osm3s": {"timestamp_osm_base": OSM_BASE}, "elements": self.elements}
        return json.dumps(doc, indent=1, sort_keys=True) + "\n"


def boundary_geojson(ring):
    coords = [[p[1], p[0]] for p in ring]
    return json.dumps({"type": "FeatureCollection", "features": [{
        "type": "Feature", "properties": {},
        "geometry": {"type": "Polygon", "coordinates": [coords]}}]}, indent=1) + "\n"


def h3_poly(ring):
    return h3.LatLngPoly([(p[0], p[1]) for p in ring[:-1]])


def cell_shape(cell):
    return SPolygon([(lng, lat) for lat, lng in h3.cell_to_boundary(cell)])


def shp(el):
    """Shapely geometry of an element in (lon, lat)."""
    if el["type"] == "node":
        return Point(el["lon"], el["lat"])
    if el["type"] == "way":
        pts = [(g["lon"], g["lat"]) for g in el["geometry"]]
        if pts[0] == pts[-1] and "highway" not in el["tags"]:
            return SPolygon(pts)
        return LineString(pts)
    outer = [(g["lon"], g["lat"]) for g in el["members"][0]["geometry"]]
    inner = [(g["lon"], g["lat"]) for g in el["members"][1]["geometry"]]
    return SPolygon(outer, [inner])


def touches(geom, cell_poly):
    """True when the feature clearly shares measure with the cell; raises on
    borderline placements so the manifest never depends on tie-breaking."""
    if geom.geom_type == "Point":
        d = cell_poly.exterior.distance(geom)
        inside = cell_poly.contains(geom)
        assert d > 2e-5, "point too close to the chosen cell edge"
        return inside
    inter = geom.intersection(cell_poly)
    measure = inter.length if geom.geom_type == "LineString" else inter.area
    full = geom.length if geom.geom_type == "LineString" else geom.area
    assert measure == 0 or measure > 1e-4 * full or measure > 1e-9, "borderline overlap"
    return measure > 0


# ---------------------------------------------------------------- town ----

CATEGORIES = [
    "aerialway", "airports", "buildings", "culture_and_entertainment", "education",
    "emergency", "finances", "healthcare", "historic", "leisure", "other", "roads_bike",
    "roads_drive", "roads_walk", "shops", "sport", "sustenance", "tourism",
    "transportation", "water",
]

# (category, tags, geometry kind) written by hand; the category column is the
# manual classification the manifest counts come from.
TOWN_TEMPLATES = [
    ("aerialway", {"aerialway": "station"}, "node"),
    ("airports", {"aeroway": "helipad"}, "node"),
    ("buildings", {"building": "yes"}, "area"),
    ("buildings", {"building": "residential"}, "area"),
    ("buildings", {"building": "house"}, "area"),
    ("culture_and_entertainment", {"amenity": "cinema"}, "node"),
    ("culture_and_entertainment", {"amenity": "theatre"}, "node"),
    ("culture_and_entertainment", {"amenity": "library"}, "area"),
    ("education", {"amenity": "school"}, "area"),
    ("education", {"amenity": "kindergarten"}, "node"),
    ("emergency", {"emergency": "defibrillator"}, "node"),
    ("emergency", {"amenity": "ambulance_station"}, "node"),
    ("finances", {"amenity": "bank"}, "node"),
    ("finances", {"amenity": "atm"}, "node"),
    ("healthcare", {"amenity": "pharmacy"}, "node"),
    ("healthcare", {"amenity": "doctors"}, "node"),
    ("historic", {"historic": "memorial"}, "node"),
    ("historic", {"historic": "castle"}, "area"),
    ("leisure", {"leisure": "park"}, "area"),
    ("leisure", {"leisure": "playground"}, "node"),
    ("other", {"amenity": "place_of_worship"}, "node"),
    ("other", {"amenity": "post_office"}, "node"),
    ("roads_bike", {"highway": "cycleway"}, "line"),
    ("roads_drive", {"highway": "residential"}, "line"),
    ("roads_drive", {"highway": "primary"}, "line"),
    ("roads_walk", {"highway": "footway"}, "line"),
    ("roads_walk", {"highway": "pedestrian"}, "line"),
    ("shops", {"shop": "bakery"}, "node"),
    ("shops", {"shop": "supermarket"}, "area"),
    ("shops", {"shop": "clothes"}, "node"),
    ("sport", {"leisure": "pitch", "sport": "soccer"}, "area"),
    ("sport", {"leisure": "fitness_centre"}, "node"),
    ("sustenance", {"amenity": "cafe"}, "node"),
    ("sustenance", {"amenity": "restaurant"}, "node"),
    ("tourism", {"tourism": "hotel"}, "node"),
    ("tourism", {"tourism": "museum"}, "area"),
    ("transportation", {"highway": "bus_stop"}, "node"),
    ("transportation", {"amenity": "parking"}, "area"),
    ("water", {"natural": "water"}, "area"),
    ("water", {"waterway": "stream"}, "line"),
]

# How many elements of each template go into the town (total 150).
TOWN_PLAN = {
    "aerialway": 2, "airports": 1, "buildings": 31, "culture_and_entertainment": 5,
    "education": 4, "emergency": 3, "finances": 5, "healthcare": 5, "historic": 4,
    "leisure": 6, "other": 5, "roads_bike": 6, "roads_drive": 14, "roads_walk": 8,
    "shops": 14, "sport": 5, "sustenance": 14, "tourism": 5, "transportation": 9,
    "water": 4,
}


def make_town():
    rng = random.Random(20210501)
    frame = Frame(46.0500, 14.5000)
    half = 700.0
    boundary = [frame.at(-half, -half), frame.at(half, -half), frame.at(half, half),
                frame.at(-half, half)]
    boundary.append(boundary[0])
    osm = Osm(1_000_000)
    intended = []

    chosen = h3.latlng_to_cell(frame.lat, frame.lon, 11)
    chosen_center = h3.cell_to_latlng(chosen)

    def rand_offset(margin=60.0):
        return rng.uniform(-half + margin, half - margin), rng.uniform(-half + margin, half - margin)

    def place_point_outside_chosen(margin=60.0):
        while True:
            e, n = rand_offset(margin)
            pt = frame.at(e, n)
            if h3.grid_distance(h3.latlng_to_cell(pt[0], pt[1], 11), chosen) >= 2:
                return e, n

    # Contents of the chosen cell: 3 shops and 1 education point plus one
    # footway crossing it. Placed first so the rest can avoid it.
    c_lat, c_lng = chosen_center
    off = [(0.00004, 0.00002), (-0.00003, 0.00004), (0.00001, -0.00005), (-0.00004, -0.00002)]
    for (dlat, dlng), (cat, tags) in zip(off, [
            ("shops", {"shop": "bakery", "name": "Corner Bakery"}),
            ("shops", {"shop": "books"}),
            ("shops", {"shop": "florist"}),
            ("education", {"amenity": "kindergarten"})]):
        osm.node((round(c_lat + dlat, 7), round(c_lng + dlng, 7)), tags)
        intended.append(cat)
    ce = (c_lng - frame.lon) * m_per_deg_lon(frame.lat)
    cn = (c_lat - frame.lat) * M_PER_DEG_LAT
    osm.way([frame.at(ce - 300, cn + 3), frame.at(ce + 300, cn + 3)], {"highway": "footway"})
    intended.append("roads_walk")

    planned = dict(TOWN_PLAN)
    planned["shops"] -= 3
    planned["education"] -= 1
    planned["roads_walk"] -= 1

    by_cat = {}
    for cat, tags, kind in TOWN_TEMPLATES:
        by_cat.setdefault(cat, []).append((tags, kind))

    for cat in CATEGORIES:
        options = by_cat[cat]
        for i in range(planned[cat]):
            tags, kind = options[i % len(options)]
            tags = dict(tags)
            if kind == "node":
                e, n = place_point_outside_chosen()
                osm.node(frame.at(e, n), tags)
            elif kind == "area":
                size = 6.0 if cat == "buildings" else 18.0
                e, n = place_point_outside_chosen(margin=80.0)
                if cat == "water" and i == 0:
                    # lake with an island, as a multipolygon relation
                    outer = square(frame, e, n, 30.0)
                    inner = square(frame, e, n, 8.0)[::-1]
                    osm.multipolygon(outer, inner, {"natural": "water", "name": "Mill Pond"})
                    intended.append(cat)
                    continue
                osm.way(square(frame, e, n, size), tags)
            else:
                # straight line away from the chosen cell
                while True:
                    e, n = rand_offset(150.0)
                    horizontal = rng.random() < 0.5
                    a = frame.at(e - 120, n) if horizontal else frame.at(e, n - 120)
                    b = frame.at(e + 120, n) if horizontal else frame.at(e, n + 120)
                    line = LineString([(a[1], a[0]), (b[1], b[0])])
                    if line.distance(cell_shape(chosen)) > 0.0004:
                        break
                osm.way([a, frame.at(e, n), b], tags)
            intended.append(cat)

    # Not part of the learning signal: stations and untagged noise.
    excluded = 0
    for _ in range(3):
        e, n = place_point_outside_chosen()
        osm.node(frame.at(e, n), {"amenity": "bicycle_rental", "network": "TownBike"})
        excluded += 1
    e, n = place_point_outside_chosen()
    osm.node(frame.at(e, n), {"bicycle_rental": "docking_station", "shop": "bicycle"})
    excluded += 1
    unmatched = 0
    for tags in ({"barrier": "fence"}, {"name": "Somewhere"}, {"natural": "tree"}):
        e, n = place_point_outside_chosen()
        osm.node(frame.at(e, n), tags)
        unmatched += 1

    assert len(intended) == 150, len(intended)
    counts = {c: intended.count(c) for c in CATEGORIES}

    # chosen-cell count vector: elements intersecting the cell, by category
    cell_poly = cell_shape(chosen)
    vec = [0] * 20
    k = 0
    for el in osm.elements:
        if k >= len(intended):
            break
        if touches(shp(el), cell_poly):
            vec[CATEGORIES.index(intended[k])] += 1
        k += 1

    # stations: 10 rows, 2 duplicate ids, 8 stations in 7 res-11 cells
    station_cells = []
    stations = []
    while len(stations) < 7:
        e, n = place_point_outside_chosen(margin=100.0)
        pt = frame.at(e, n)
        cell = h3.latlng_to_cell(pt[0], pt[1], 11)
        if any(h3.grid_distance(cell, c) < 3 for c in station_cells):
            continue
        station_cells.append(cell)
        stations.append((f"TB{len(stations) + 1:02d}", pt))
    # eighth station shares the first station's cell
    lat, lng = h3.cell_to_latlng(station_cells[0])
    twin_pt = (round(lat + 0.00003, 7), round(lng - 0.00003, 7))
    assert h3.latlng_to_cell(twin_pt[0], twin_pt[1], 11) == station_cells[0]
    stations.append(("TB08", twin_pt))
    rows = list(stations)
    rows.insert(3, ("TB02", (rows[1][1][0] + 0.001, rows[1][1][1])))   # duplicate id, moved
    rows.insert(7, ("TB05", rows[5][1]))                                # exact duplicate
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["station_id", "lat", "lon", "name"])
    for sid, pt in rows:
        w.writerow([sid, f"{pt[0]:.7f}", f"{pt[1]:.7f}", f"Stop {sid}"])

    poly = h3_poly(boundary)
    manifest = {
        "city": "town",
        "elements_total": len(osm.elements),
        "categorized": len(intended),
        "excluded": excluded,
        "unmatched": unmatched,
        "category_counts": counts,
        "chosen_cell": {"h3": chosen, "resolution": 11, "counts": vec},
        "cell_counts": {str(r): len(h3.polygon_to_cells(poly, r)) for r in (9, 10, 11)},
        "stations": {"rows": len(rows), "unique": len(stations),
                     "cells_res11": len(set(station_cells))},
        "osm_base": OSM_BASE,
    }

    out = HERE / "town"
    out.mkdir(exist_ok=True)
    (out / "overpass.json").write_text(osm.dump())
    (out / "boundary.geojson").write_text(boundary_geojson(boundary))
    (out / "stations.csv").write_text(buf.getvalue())
    (out / "manifest.json").write_text(json.dumps(manifest, indent=1) + "\n")


# ---------------------------------------------------------------- twin ----

HUB_POIS = [
    {"shop": "convenience"}, {"shop": "bakery"}, {"amenity": "cafe"},
    {"amenity": "restaurant"}, {"highway": "bus_stop"}, {"amenity": "bank"},
    {"tourism": "hotel"}, {"amenity": "fast_food"}, {"shop": "clothes"},
    {"amenity": "pharmacy"}, {"amenity": "bar"}, {"railway": "tram_stop"},
]
SPARSE_POIS = [
    {"amenity": "cafe"}, {"shop": "hairdresser"}, {"leisure": "playground"},
    {"amenity": "place_of_worship"}, {"historic": "memorial"}, {"amenity": "school"},
]


def point_in_cell(rng, cell):
    lat, lng = h3.cell_to_latlng(cell)
    while True:
        p = (round(lat + rng.uniform(-0.00012, 0.00012), 7),
             round(lng + rng.uniform(-0.00016, 0.00016), 7))
        if h3.latlng_to_cell(p[0], p[1], 11) == cell:
            return p


def make_twin_city(name, lat, lon, hubs, decoys, seed, first_id, station_format):
    rng = random.Random(seed)
    frame = Frame(lat, lon)
    half = 700.0
    boundary = [frame.at(-half, -half), frame.at(half, -half), frame.at(half, half),
                frame.at(-half, half)]
    boundary.append(boundary[0])
    cells = sorted(h3.polygon_to_cells(h3_poly(boundary), 11))
    inner = [c for c in cells
             if all(n in set(cells) for n in h3.grid_disk(c, 2))]
    osm = Osm(first_id)

    picked = []
    pool = list(inner)
    rng.shuffle(pool)
    for c in pool:
        if all(h3.grid_distance(c, p) >= 4 for p in picked):
            picked.append(c)
        if len(picked) == hubs + decoys:
            break
    assert len(picked) == hubs + decoys, f"{name}: only {len(picked)} hub sites"
    hub_cells, decoy_cells = picked[:hubs], picked[hubs:]

    for c in picked:
        for j in range(rng.randint(2, 7)):
            osm.node(point_in_cell(rng, c), dict(HUB_POIS[(j + rng.randrange(12)) % 12]))
        # a plaza building in most dense cells
        if rng.random() < 0.7:
            plat, plng = h3.cell_to_latlng(c)
            pe = (plng - frame.lon) * m_per_deg_lon(frame.lat)
            pn = (plat - frame.lat) * M_PER_DEG_LAT
            osm.way(square(frame, pe, pn, 5.0), {"building": "retail"})

    # street grid
    for off in range(-600, 601, 200):
        osm.way([frame.at(-690, off + rng.uniform(-20, 20)), frame.at(690, off + rng.uniform(-20, 20))],
                {"highway": "residential"})
        osm.way([frame.at(off + rng.uniform(-20, 20), -690), frame.at(off + rng.uniform(-20, 20), 690)],
                {"highway": "residential"})
    for _ in range(6):
        e = rng.uniform(-600, 600)
        osm.way([frame.at(e, -500), frame.at(e + rng.uniform(-50, 50), 500)], {"highway": "footway"})
    osm.way([frame.at(-690, 30), frame.at(690, 60)], {"highway": "cycleway"})

    # scattered houses and a few lone POIs
    for _ in range(220):
        e, n = rng.uniform(-680, 680), rng.uniform(-680, 680)
        osm.way(square(frame, e, n, 5.0), {"building": "house"})
    for i in range(160):
        e, n = rng.uniform(-680, 680), rng.uniform(-680, 680)
        osm.node(frame.at(e, n), dict(SPARSE_POIS[i % len(SPARSE_POIS)]))
    osm.way(square(frame, -400, 400, 40.0), {"natural": "water"})
    for _ in range(2):
        e, n = rng.uniform(-600, 600), rng.uniform(-600, 600)
        osm.node(frame.at(e, n), {"amenity": "bicycle_rental"})

    stations = []
    for i, c in enumerate(hub_cells):
        stations.append((f"{name[0].upper()}{i + 1:03d}", point_in_cell(rng, c)))

    out = HERE / "twin" / name
    out.mkdir(parents=True, exist_ok=True)
    (out / "overpass.json").write_text(osm.dump())
    (out / "boundary.geojson").write_text(boundary_geojson(boundary))
    if station_format == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["station_id", "lat", "lon"])
        for sid, pt in stations:
            w.writerow([sid, f"{pt[0]:.7f}", f"{pt[1]:.7f}"])
        (out / "stations.csv").write_text(buf.getvalue())
    else:
        fc = {"type": "FeatureCollection", "features": [
            {"type": "Feature", "properties": {"station_id": sid},
             "geometry": {"type": "Point", "coordinates": [pt[1], pt[0]]}}
            for sid, pt in stations]}
        (out / "stations.geojson").write_text(json.dumps(fc, indent=1) + "\n")
    return {"cells_res11": len(cells), "stations": len(stations),
            "station_cells": len({h3.latlng_to_cell(p[0], p[1], 11) for _, p in stations}),
            "hub_cells": hub_cells, "decoy_cells": decoy_cells}


def make_twin():
    alpha = make_twin_city("alpha", 46.1000, 14.6000, 28, 10, 7001, 2_000_000, "csv")
    beta = make_twin_city("beta", 46.2000, 14.7000, 25, 10, 7002, 3_000_000, "geojson")
    (HERE / "twin" / "manifest.json").write_text(json.dumps({"alpha": alpha, "beta": beta}, indent=1) + "\n")
    config = {
        "cities": [
            {"name": "alpha",
             "boundary": {"kind": "polygon_file", "path": "alpha/boundary.geojson"},
             "stations": {"kind": "csv_file", "path": "alpha/stations.csv"},
             "osm_file": "alpha/overpass.json"},
            {"name": "beta",
             "boundary": {"kind": "polygon_file", "path": "beta/boundary.geojson"},
             "stations": {"kind": "geojson_file", "path": "beta/stations.geojson"},
             "osm_file": "beta/overpass.json"},
        ],
        "offline": True,
    }
    (HERE / "twin" / "pipeline.json").write_text(json.dumps(config, indent=1) + "\n")


if __name__ == "__main__":
    make_town()
    make_twin()

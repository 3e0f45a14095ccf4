#!/usr/bin/env python3
"""Regenerate the shipped trap layout presets in crates/core/presets/."""
import json
import pathlib

OUT = pathlib.Path(__file__).resolve().parent.parent / "crates" / "core" / "presets"


def electrode(id_, role, rects):
    return {"id": id_, "role": role, "rects": [list(map(float, r)) for r in rects]}


def trap1():
    length = 3000.0
    period = 260.0
    pads = {"1": [], "2": [], "3": []}
    for n in range(-11, 12):
        c = period * n
        pads["2"].append((c - 130, c - 30, -50, 50))
        pads["1"].append((c - 30, c + 30, -30, 30))
        pads["3"].append((c + 30, c + 130, -50, 50))
    # routing strips joining the pads of each inner electrode
    pads["1"].append((-length, length, 53, 60))
    pads["3"].append((-length, length, 63, 70))
    pads["2"].append((-length, length, -70, -63))
    electrodes = [electrode(k, "dc-inner", pads[k]) for k in ("1", "2", "3")]
    electrodes.append(electrode("4", "dc-inner", [(-length, length, 70, 88.5)]))
    electrodes.append(electrode("5", "dc-inner", [(-length, length, -88.5, -70)]))
    electrodes.append(
        electrode("rf", "rf", [(-length, length, 88.5, 345.5), (-length, length, -345.5, -88.5)])
    )
    spans = [(-750, -250), (-250, 250), (250, 750)]
    for i, (x1, x2) in enumerate(spans):
        electrodes.append(electrode(str(6 + i), "shim", [(x1, x2, 345.5, 845.5)]))
    for i, (x1, x2) in enumerate(spans):
        electrodes.append(electrode(str(9 + i), "shim", [(x1, x2, -845.5, -345.5)]))
    return {
        "name": "trap1",
        "ion_height_um": 170.0,
        "rf_amplitude_v": 205.0,
        "rf_frequency_mhz": 40.0,
        "electrodes": electrodes,
    }


def trap2():
    length = 6000.0
    electrodes = [
        electrode("C", "dc-inner", [(-length, length, -42.5, 42.5)]),
        electrode("rf", "rf", [(-length, length, 42.5, 157.5), (-length, length, -157.5, -42.5)]),
    ]
    dyn_pitch, dyn_count = 105.0, 48
    x0 = -dyn_pitch * dyn_count / 2
    for row, (y1, y2) in (("T", (157.5, 352.5)), ("B", (-352.5, -157.5))):
        for k in range(dyn_count):
            x = x0 + dyn_pitch * k
            electrodes.append(electrode(f"D{row}{k:02d}", "dc-dynamic", [(x, x + dyn_pitch, y1, y2)]))
    shim_pitch, shim_count = 95.0, 49
    x0 = -shim_pitch * shim_count / 2
    for row, (y1, y2) in (("T", (352.5, 547.5)), ("B", (-547.5, -352.5))):
        for k in range(shim_count):
            x = x0 + shim_pitch * k
            electrodes.append(electrode(f"S{row}{k:02d}", "shim", [(x, x + shim_pitch, y1, y2)]))
    return {
        "name": "trap2",
        "ion_height_um": 80.0,
        "rf_amplitude_v": 110.0,
        "rf_frequency_mhz": 40.0,
        "electrodes": electrodes,
    }


if __name__ == "__main__":
    for layout in (trap1(), trap2()):
        path = OUT / f"{layout['name']}.json"
        path.write_text(json.dumps(layout, indent=1) + "\n")
        print(path)

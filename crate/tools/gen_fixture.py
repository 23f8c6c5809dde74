#!/usr/bin/env python3
"""Generate the examples-local scenario bundle for gridplan.

Three regions (BA, ME, RS), four representative days (one per season,
3 slices of 8h each), 2020-2050, five technology kinds (coal, gas, wind,
solar + cascade hydro).  Deterministic: no RNG anywhere.
"""
import math
import os

ROOT = os.path.join(os.path.dirname(os.path.dirname(os.path.abspath(__file__))), "examples-local")
DATA = os.path.join(ROOT, "data")
os.makedirs(DATA, exist_ok=True)

REGIONS = ["BA", "ME", "RS"]
REP = [  # (rep_day, source_day, weight_days, label)
    (0, 15, 92.0, "winter"),
    (1, 105, 91.0, "spring"),
    (2, 196, 91.0, "summer"),
    (3, 288, 91.0, "autumn"),
]
HPD = 3  # three 8-hour blocks: night, day, evening
SEASON_SHARE = [0.30, 0.24, 0.21, 0.25]  # of annual energy
SLICE_SHARE = [0.26, 0.40, 0.34]         # within a day's energy
ANNUAL_MWH = {"BA": 12_600_000.0, "ME": 3_600_000.0, "RS": 24_000_000.0}


def w(path, header, rows):
    with open(os.path.join(DATA, path), "w") as f:
        f.write(header + "\n")
        for r in rows:
            f.write(",".join(str(x) for x in r) + "\n")


# --- params ---------------------------------------------------------------
w("params.csv", "key,region,value", [
    ("base_year", "", 2020),
    ("end_year", "", 2050),
    ("discount_rate", "", 0.05),
    ("reserve_margin", "", 1.2),
    ("loss", "BA", 0.10),
    ("loss", "ME", 0.11),
    ("loss", "RS", 0.12),
])

# --- technologies ---------------------------------------------------------
# id,region,kind,capex,fixed_om,var_om,life,ef,avail,firm,resid,resid_until,
# max_new,max_total,land_group,land_bin
w("technologies.csv",
  "id,region,kind,capex,fixed_om,var_om,life,emission_t_per_mwh,availability,"
  "firm_credit,residual_mw,residual_until,max_new_mw,max_total_mw,land_group,land_bin",
  [
      ("coal_ba", "BA", "coal", 1800000, 45000, 32, 40, 0.95, 0.85, 1.0, 1900, 2039, 200, 3500, "", ""),
      ("coal_me", "ME", "coal", 1850000, 46000, 34, 40, 1.0, 0.84, 1.0, 210, 2050, 150, 800, "", ""),
      ("coal_rs", "RS", "coal", 1750000, 44000, 31, 40, 0.9, 0.86, 1.0, 3600, 2050, 300, 6000, "", ""),
      ("gas_rs", "RS", "gas", 900000, 22000, 58, 30, 0.37, 0.9, 0.95, 450, 2050, 400, 4000, "", ""),
      ("wind_ba", "BA", "wind", 1250000, 28000, 1, 25, 0, "", 0.15, 135, 2044, 300, "", "shared", "0.20-0.30"),
      ("wind_rs", "RS", "wind", 1250000, 28000, 1, 25, 0, "", 0.15, 398, 2044, 500, "", "shared", "0.20-0.30"),
      ("wind_rs_agri", "RS", "wind", 1230000, 27000, 1, 25, 0, "", 0.15, 0, 9999, 600, "", "agricultural", "0.20-0.30"),
      ("solar_ba", "BA", "solar", 690000, 12000, 0, 25, 0, "", 0.1, 8, 2049, 150, "", "solar_only", "all"),
      ("solar_me", "ME", "solar", 700000, 12000, 0, 25, 0, "", 0.1, 5, 2049, 200, "", "solar_only", "all"),
      ("solar_rs", "RS", "solar", 680000, 12000, 0, 25, 0, "", 0.1, 10, 2049, 600, "", "solar_only", "all"),
  ])

# --- demand ---------------------------------------------------------------
rows = []
for region in REGIONS:
    for (d, _, _, _) in REP:
        for h in range(HPD):
            mwh = ANNUAL_MWH[region] * SEASON_SHARE[d] * SLICE_SHARE[h]
            rows.append((region, d, h, round(mwh, 1)))
w("demand.csv", "region,rep_day,hour,mwh", rows)

# --- weights --------------------------------------------------------------
w("weights.csv", "rep_day,source_day,weight_days",
  [(d, src, wt) for (d, src, wt, _) in REP])

# --- capacity-factor profiles ----------------------------------------------
CF = {
    "wind_ba": [[0.34, 0.30, 0.32], [0.25, 0.22, 0.23], [0.16, 0.14, 0.15], [0.27, 0.24, 0.26]],
    "wind_rs": [[0.32, 0.28, 0.30], [0.24, 0.21, 0.22], [0.15, 0.13, 0.14], [0.26, 0.23, 0.25]],
    "wind_rs_agri": [[0.33, 0.29, 0.31], [0.25, 0.22, 0.23], [0.16, 0.14, 0.15], [0.27, 0.24, 0.26]],
    "solar_ba": [[0.0, 0.15, 0.05], [0.0, 0.23, 0.07], [0.0, 0.28, 0.08], [0.0, 0.18, 0.06]],
    "solar_me": [[0.0, 0.16, 0.05], [0.0, 0.24, 0.07], [0.0, 0.29, 0.09], [0.0, 0.19, 0.06]],
    "solar_rs": [[0.0, 0.14, 0.04], [0.0, 0.22, 0.06], [0.0, 0.27, 0.08], [0.0, 0.17, 0.05]],
}
rows = []
for tech, days in CF.items():
    for d, hs in enumerate(days):
        for h, cf in enumerate(hs):
            rows.append((tech, d, h, cf))
w("tech_cf.csv", "tech,rep_day,hour,cf", rows)

# --- demand growth ----------------------------------------------------------
GROWTH = {
    "BA": [(2020, 1.0), (2030, 1.12), (2040, 1.28), (2050, 1.45)],
    "ME": [(2020, 1.0), (2030, 1.10), (2040, 1.22), (2050, 1.38)],
    "RS": [(2020, 1.0), (2030, 1.15), (2040, 1.33), (2050, 1.52)],
}
rows = [(r, y, m) for r in REGIONS for (y, m) in GROWTH[r]]
w("demand_growth.csv", "region,year,multiplier", rows)

# --- trade ------------------------------------------------------------------
w("trade.csv", "border,region,year,price_low,price_high,capacity_mw", [
    ("ba_hr", "BA", 2020, 48, 70, 800),
    ("ba_hr", "BA", 2035, 54, 78, 900),
    ("ba_hr", "BA", 2050, 60, 88, 1100),
    ("me_al", "ME", 2020, 50, 74, 450),
    ("me_al", "ME", 2035, 56, 82, 520),
    ("me_al", "ME", 2050, 62, 90, 600),
    ("rs_hu", "RS", 2020, 46, 68, 2200),
    ("rs_hu", "RS", 2035, 52, 76, 2700),
    ("rs_hu", "RS", 2050, 58, 85, 3200),
])

# --- emissions ----------------------------------------------------------------
# baseline_t gets pinned to the unconstrained reference year's emissions
# (rounded); regenerate after measuring if the supply stack changes.
BASELINE_T = 41_430_000
w("emissions.csv", "key,year,value", [
    ("baseline_t", 2020, BASELINE_T),
    ("limit_fraction", 2020, 1.0),
    ("limit_fraction", 2030, 0.45),
    ("limit_fraction", 2050, 0.0),
])

# --- land budgets (resource inventory format) ---------------------------------
# region,land_class,bin,share,avg_cf,land_km2,potential_mw
MW_PER_KM2 = 1.7


def pool(region, land_class, bin_label, mw, share, avg_cf):
    km2 = mw / MW_PER_KM2
    return (region, land_class, bin_label, share, avg_cf,
            round(km2, 2), round(km2 * MW_PER_KM2, 1))


w("land_budget.csv", "region,land_class,bin,share,avg_cf,land_km2,potential_mw", [
    # pools that technologies draw on
    pool("BA", "shared", "0.20-0.30", 8000.0, 0.21, 0.25),
    pool("RS", "shared", "0.20-0.30", 13000.0, 0.14, 0.25),
    pool("RS", "agricultural", "0.20-0.30", 30000.0, 0.36, 0.25),
    pool("RS", "solar_only", "all", 15000.0, 0.05, 0.16),
    pool("BA", "solar_only", "all", 2500.0, 0.04, 0.15),
    pool("ME", "solar_only", "all", 3000.0, 0.07, 0.18),
    # inert texture rows: neighbouring bins and exclusions
    pool("BA", "shared", "0.10-0.20", 2400.0, 0.11, 0.15),
    pool("BA", "shared", "0.30-0.40", 900.0, 0.04, 0.34),
    pool("BA", "agricultural", "0.20-0.30", 4100.0, 0.17, 0.24),
    pool("ME", "shared", "0.20-0.30", 1500.0, 0.12, 0.26),
    pool("RS", "shared", "0.10-0.20", 2600.0, 0.08, 0.15),
    pool("RS", "agricultural", "0.30-0.40", 2300.0, 0.03, 0.33),
    ("BA", "shared", "excluded", 0.53, "", 7200.00, ""),
    ("ME", "shared", "excluded", 0.81, "", 5100.00, ""),
    ("RS", "shared", "excluded", 0.78, "", 21000.00, ""),
])

# --- cascade -------------------------------------------------------------------
with open(os.path.join(DATA, "cascade.txt"), "w") as f:
    f.write("""# Drina-like two-plant cascade: alpine catchment, seasonal storage,
# an upstream high-head plant in BA and a downstream run-of-river plant
# in ME, closing at a spillway.
node drina_src catchment river=drina
node res_upper reservoir storage_mcm=300 level_min=30 level_max=300
node hpp_alpha plant region=BA rate_mwh_per_mcm=220 capacity_mw=700 capex=2400000 fixed_om=40000 var_om=0 life=60 max_new_mw=300 residual_until=2050
node seg_mid river_segment river=drina
node hpp_beta plant region=ME rate_mwh_per_mcm=180 capacity_mw=560 capex=2400000 fixed_om=40000 var_om=0 life=60 max_new_mw=200 residual_until=2050
node out_spill spillway

link drina_src -> res_upper
link res_upper -> hpp_alpha
link hpp_alpha -> seg_mid
link seg_mid -> hpp_beta
link hpp_beta -> out_spill
""")

# --- inflows ----------------------------------------------------------------------
rows = []
for d in range(1, 366):
    q = 8.0 + 4.0 * math.sin(2 * math.pi * (d - 120) / 365.0) \
        + 0.8 * math.sin(4 * math.pi * d / 365.0)
    rows.append(("drina", d, round(q, 3)))
w("inflows.csv", "river,day_of_year,discharge_mcm_per_day", rows)

# --- configs -----------------------------------------------------------------------
CONFIGS = {
    "ref.cfg": """# Reference scenario, low trade prices.
scenario = REF
trade_price = low
data = data
out = runs/ref
seed = 42

override new_cap_bound kind=coal region=ME mw=0
override cascade_new_cap mw=0
override land_group group=agricultural enabled=false
""",
    "ag.cfg": """# Agricultural-wind scenario: the agricultural land pool opens up.
scenario = AG
trade_price = low
data = data
out = runs/ag
seed = 42

override new_cap_bound kind=coal region=ME mw=0
override cascade_new_cap mw=0
override land_group group=agricultural enabled=true
""",
    "el.cfg": """# Emission-limited scenario: reference assumptions plus a CO2 ceiling
# that tightens to zero by 2050.
scenario = EL
trade_price = low
data = data
out = runs/el
seed = 42

override new_cap_bound kind=coal region=ME mw=0
override cascade_new_cap mw=0
override land_group group=agricultural enabled=false
override emission_limits enabled=true
""",
    "ref_high.cfg": """# Reference scenario under the high trade-price variant.
scenario = REF
trade_price = high
data = data
out = runs/ref_high
seed = 42

override new_cap_bound kind=coal region=ME mw=0
override cascade_new_cap mw=0
override land_group group=agricultural enabled=false
""",
    "el_high.cfg": """# Emission-limited scenario under the high trade-price variant.
scenario = EL
trade_price = high
data = data
out = runs/el_high
seed = 42

override new_cap_bound kind=coal region=ME mw=0
override cascade_new_cap mw=0
override land_group group=agricultural enabled=false
override emission_limits enabled=true
""",
}
for name, body in CONFIGS.items():
    with open(os.path.join(ROOT, name), "w") as f:
        f.write(body)

print("fixture written to", ROOT)

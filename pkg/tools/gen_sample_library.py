"""Regenerate the bundled sample library (illustrative numbers, not vendor data)."""
import json
from pathlib import Path
T = [8, 16, 24, 32, 48, 64]
lut = {
  "add": ([0.38, 0.50, 0.66, 0.82, 1.02, 1.22], "+"),
  "sub": ([0.38, 0.50, 0.66, 0.82, 1.02, 1.22], "-"),
  "neg": ([0.35, 0.50, 0.70, 0.90, 1.10, 1.30], None),
  "mul": ([1.60, 3.40, 4.80, 6.20, 8.50, 11.0], "*"),
  "shl": ([0.60, 0.90, 1.10, 1.20, 1.50, 1.70], "<<"),
  "shr": ([0.60, 0.90, 1.10, 1.20, 1.50, 1.70], ">>>"),
  "cmp": ([0.45, 0.55, 0.70, 0.80, 1.00, 1.20], "<"),
}
impls = []
for op, (delays, sym) in lut.items():
    for w, d in zip(T, delays):
        ports = ["A"] if op == "neg" else ["A", "B"]
        matcher = f"({op} ?A)" if op == "neg" else f"({op} ?A ?B)"
        tmpl = "lut_neg" if op == "neg" else ("lut_cmp" if op == "cmp" else "lut_binop")
        luts = w * (w // 4 if op == "mul" else 1)
        impls.append({
          "identifier": f"LUT_{op}_w{w}", "kind": "basic-logic", "matcher": matcher,
          "ports": ports,
          "conditions": [{"port": p, "max_bits": w, "kind": "int"} for p in ports],
          "configurations": [{"config": "comb", "latency": 0,
              "t_incoming": {p: d for p in ports}, "t_outgoing": 0.0, "t_cycle": 0.0,
              "resources": {"LUT": luts}, "template": tmpl,
              "params": ({"symbol": sym} if sym else {})}]})
for op, sym in (("and", "&"), ("or", "|"), ("xor", "^")):
    impls.append({
      "identifier": f"LUT_{op}", "kind": "basic-logic", "matcher": f"({op} ?A ?B)",
      "ports": ["A", "B"], "conditions": [{"port": p, "kind": "int"} for p in "AB"],
      "configurations": [{"config": "comb", "latency": 0, "t_incoming": {"A": 0.3, "B": 0.3},
          "t_outgoing": 0.0, "t_cycle": 0.0, "resources": {"LUT": 32},
          "template": "lut_binop", "params": {"symbol": sym}}]})

# DSP48E2: pattern families x register configurations
dsp_patterns = [
  ("DSP48E2_M", "(mul ?A ?B)", ["A", "B"], "A*B", False),
  ("DSP48E2_MC", "(add (mul ?A ?B) ?C)", ["A", "B", "C"], "(A*B)+C", False),
  ("DSP48E2_ADM", "(mul (add ?A ?D) ?B)", ["A", "D", "B"], "(A+D)*B", True),
  ("DSP48E2_ADMC", "(add (mul (add ?A ?D) ?B) ?C)", ["A", "D", "B", "C"], "((A+D)*B)+C", True),
  ("DSP48E2_C_SUB_ADM", "(sub ?C (mul (add ?A ?D) ?B))", ["A", "D", "B", "C"], "C-((A+D)*B)", True),
  ("DSP48E2_NEG_ADM", "(neg (mul (add ?A ?D) ?B))", ["A", "D", "B"], "-((A+D)*B)", True),
]
limits = {"A": 30, "D": 27, "B": 18, "C": 48}
def dsp_configs(ports, preadd):
    out = []
    # (config, latency, tin(A/D), tin(B), tin(C), t_out, t_cycle, regs)
    rows = [
      ("A0B0M0P0", 0, 3.29 if preadd else 2.75, 2.75, 1.20, 0.0, 0.0, dict(AREG=0, BREG=0, ADREG=0, MREG=0, PREG=0)),
      ("A0B0M0P1", 1, 3.05 if preadd else 2.50, 2.50, 0.95, 0.85, 0.0, dict(AREG=0, BREG=0, ADREG=0, MREG=0, PREG=1)),
      ("A0B0M1P1", 2, 1.90 if preadd else 1.10, 1.10, 0.35, 0.85, 0.95, dict(AREG=0, BREG=0, ADREG=0, MREG=1, PREG=1)),
      ("A1B1M1P1", 3, 0.30, 0.30, 0.30, 0.85, 2.05 if preadd else 1.67, dict(AREG=1, BREG=1, ADREG=0, MREG=1, PREG=1)),
      ("A2B2M1P1", 4, 0.30, 0.30, 0.30, 0.85, 1.67, dict(AREG=1, BREG=1, ADREG=1, MREG=1, PREG=1)),
    ]
    for cid, lat, ta, tb, tc, to, tcy, regs in rows:
        tin = {}
        for p in ports:
            tin[p] = {"A": ta, "D": ta, "B": tb, "C": tc}[p]
            if not preadd and p == "A":
                tin[p] = tb
        out.append({"config": cid, "latency": lat, "t_incoming": tin, "t_outgoing": to,
                    "t_cycle": tcy, "resources": {"DSP": 1}, "template": "dsp48e2",
                    "params": regs})
    return out
for ident, matcher, ports, func, preadd in dsp_patterns:
    cfgs = dsp_configs(ports, preadd)
    for c in cfgs:
        c["params"] = {**c["params"], "USE_PREADD": int(preadd)}
        c["func"] = func
    impls.append({"identifier": ident, "kind": "hardware-primitive", "matcher": matcher,
                  "ports": ports,
                  "conditions": [{"port": p, "max_bits": limits[p], "kind": "int"} for p in ports],
                  "configurations": cfgs})
for c in [x for e in impls for x in e["configurations"]]:
    c.pop("func", None)

# integer divider IP
impls.append({"identifier": "DIV_IP", "kind": "parameterized-ip",
  "matcher": "(div ?dividend ?divisor)", "ports": ["dividend", "divisor"],
  "conditions": [{"port": "dividend", "max_bits": 32, "kind": "int"},
                 {"port": "divisor", "max_bits": 32, "kind": "int"}],
  "configurations": [
    {"config": f"lat{L}", "latency": L, "t_incoming": {"dividend": 0.6, "divisor": 0.6},
     "t_outgoing": 0.5, "t_cycle": tc, "resources": {"LUT": 300 + 20 * L, "FF": 40 * L},
     "template": "div_ip", "params": {}}
    for L, tc in ((8, 2.9), (12, 2.2), (16, 1.6))]})

# pipelined integer multiplier IP for operands too wide for one DSP
impls.append({"identifier": "MUL_IP", "kind": "parameterized-ip",
  "matcher": "(mul ?A ?B)", "ports": ["A", "B"],
  "conditions": [{"port": "A", "max_bits": 64, "kind": "int"},
                 {"port": "B", "max_bits": 64, "kind": "int"}],
  "configurations": [
    {"config": f"lat{L}", "latency": L, "t_incoming": {"A": 0.5, "B": 0.5},
     "t_outgoing": 0.5, "t_cycle": tc, "resources": {"DSP": 4, "LUT": 120, "FF": 60 * L},
     "template": "mul_ip", "params": {}}
    for L, tc in ((3, 2.4), (5, 1.8), (7, 1.4))]})

# floating-point IPs
fp = {
  "FP_ADD": ("(add ?a ?b)", [(3, 3.2), (6, 2.3), (8, 1.9), (11, 1.45)], "fp_add"),
  "FP_SUB": ("(sub ?a ?b)", [(3, 3.2), (6, 2.3), (8, 1.9), (11, 1.45)], "fp_sub"),
  "FP_MUL": ("(mul ?a ?b)", [(2, 3.6), (4, 2.4), (6, 1.75), (8, 1.4)], "fp_mul"),
  "FP_DIV": ("(div ?a ?b)", [(8, 3.8), (12, 2.9), (20, 2.1), (28, 1.6)], "fp_div"),
  "FP_SQRT": ("(sqrt ?a)", [(10, 2.32), (14, 1.59), (25, 1.59), (28, 1.02)], "fp_sqrt"),
  "FP_EXP": ("(exp ?a)", [(8, 2.22), (12, 1.95), (20, 1.43), (30, 1.43)], "fp_exp"),
  "FP_LOG": ("(log ?a)", [(10, 2.6), (16, 1.9), (22, 1.5)], "fp_log"),
  "FP_RECIP": ("(recip ?a)", [(8, 2.9), (14, 2.0), (22, 1.5)], "fp_recip"),
  "FP_CMP": ("(cmp ?a ?b)", [(1, 1.3), (2, 0.9)], "fp_cmp"),
}
for ident, (matcher, presets, mod) in fp.items():
    ports = ["a", "b"] if "?b" in matcher else ["a"]
    impls.append({"identifier": ident, "kind": "parameterized-ip", "matcher": matcher,
      "ports": ports, "conditions": [{"port": p, "kind": "float"} for p in ports],
      "configurations": [
        {"config": f"lat{L}", "latency": L, "t_incoming": {p: 0.7 for p in ports},
         "t_outgoing": 0.55, "t_cycle": tc, "resources": {"LUT": 200 + 15 * L, "FF": 30 * L},
         "template": "fp_ip", "params": {"module": mod}} for L, tc in presets]})
impls.append({"identifier": "FP_NEG", "kind": "basic-logic", "matcher": "(neg ?a)",
  "ports": ["a"], "conditions": [{"port": "a", "kind": "float"}],
  "configurations": [{"config": "comb", "latency": 0, "t_incoming": {"a": 0.15},
     "t_outgoing": 0.0, "t_cycle": 0.0, "resources": {"LUT": 1}, "template": "fp_neg", "params": {}}]})

doc = {
  "version": 1,
  "name": "kintex-ultrascale-plus-sample",
  "note": "Illustrative timing values for a Kintex UltraScale+ -1 part. Not vendor data; profile your own device.",
  "constants": {"t_net": 0.6, "t_su": 0.1, "t_clkq": 0.15},
  "algebraic_rules": [
    {"name": "add-comm", "rule": "(add ?a ?b) -> (add ?b ?a)", "dtype_kind": "int"},
    {"name": "mul-comm", "rule": "(mul ?a ?b) -> (mul ?b ?a)", "dtype_kind": "int"},
    {"name": "neg-mul-left", "rule": "(mul (neg ?a) ?b) -> (neg (mul ?a ?b))", "dtype_kind": "int"},
    {"name": "neg-mul-right", "rule": "(mul ?a (neg ?b)) -> (neg (mul ?a ?b))", "dtype_kind": "int"},
    {"name": "neg-neg", "rule": "(neg (neg ?a)) -> ?a", "dtype_kind": "int"},
    {"name": "sub-to-add-neg", "rule": "(sub ?a ?b) -> (add ?a (neg ?b))", "dtype_kind": "int"},
  ],
  "templates": {
    "lut_binop": "assign {out} = {A} {symbol} {B};",
    "lut_neg": "assign {out} = -{A};",
    "lut_cmp": "assign {out} = ({A} < {B});",
    "dsp48e2": "DSP48E2 #({param_list}) {inst} (.CLK({clk}), {port_list}, .P({out}));",
    "div_ip": "Div_IP_{width}_lat{latency} {inst} (.aclk({clk}), {port_list}, .quotient({out}));",
    "mul_ip": "Mul_IP_{width}_lat{latency} {inst} (.CLK({clk}), {port_list}, .P({out}));",
    "fp_ip": "{module}_lat{latency} {inst} (.aclk({clk}), {port_list}, .result({out}));",
    "fp_neg": "assign {out} = {{~{a}[31], {a}[30:0]}};",
  },
  "implementations": impls,
}
json.dump(doc, open(Path(__file__).resolve().parents[1] / "src/eqsynth/data/kintex_usp.json", "w"), indent=1)


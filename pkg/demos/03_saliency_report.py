"""Render an HTML saliency report for a single toy instance.

Positive scores tint blue, negative scores tint red, with opacity scaled
by magnitude. The report shows the aggregate view plus one view per
output token and embeds the run settings as JSON.
"""

import pathlib

from seqattrib import ExplainerConfig, ToyOracle, explain, render_report
from seqattrib.toymodel import make_toy_instance, toy_generate

instance = make_toy_instance(toy_generate(seed=3, d=6, T=3, V=4), seed=3)

with ToyOracle() as oracle:
    matrix = explain(instance, oracle, ExplainerConfig(method="kernel_shap", n_samples=200, seed=3))

manifest = {"command": "demos/03_saliency_report.py", "seed": 3, "method": matrix.method}
html = render_report(instance, matrix, aggregation="sum", manifest=manifest,
                     title="kernel SHAP saliency")
out = pathlib.Path("saliency_demo.html")
out.write_text(html)
print(f"wrote {out} ({len(html)} bytes); open it in a browser")

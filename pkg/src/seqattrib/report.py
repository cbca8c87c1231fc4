"""Static HTML saliency reports.

Features are tinted blue for positive and red for negative importance, with
opacity proportional to |score| / max|score|. The page is fully
self-contained: inline CSS, no external fetches.
"""

from __future__ import annotations

import html
import json

import numpy as np

from .core import AttributionMatrix, Instance, aggregate_attribution

_PAGE = """<!DOCTYPE html>
<html>
<head>
<meta charset="utf-8">
<title>{title}</title>
<style>
body {{ font-family: Georgia, serif; margin: 2em auto; max-width: 60em; }}
.tokens {{ line-height: 2.2; }}
.tok {{ padding: 2px 4px; border-radius: 3px; margin: 0 1px; }}
.view {{ margin-bottom: 1.5em; }}
h2 {{ font-size: 1.05em; border-bottom: 1px solid #ccc; }}
.legend {{ color: #555; font-size: 0.9em; }}
table.scores {{ border-collapse: collapse; margin-top: 1em; }}
table.scores td, table.scores th {{ border: 1px solid #ddd; padding: 2px 8px; text-align: right; }}
</style>
</head>
<body>
<h1>{title}</h1>
<p class="legend">Blue marks positive importance, red negative; darker means
stronger. Method: <b>{method}</b>, seed {seed}.</p>
<p>Output tokens: {output}</p>
{views}
{score_table}
<script type="application/json" id="run-manifest">{manifest}</script>
</body>
</html>
"""


def _tint(value: float, max_abs: float) -> str:
    if max_abs <= 0 or value == 0:
        return "background: none;"
    alpha = min(abs(value) / max_abs, 1.0)
    color = "59, 118, 229" if value > 0 else "220, 53, 53"
    return f"background: rgba({color}, {alpha:.3f});"


def _token_view(instance: Instance, scores: np.ndarray, max_abs: float) -> str:
    style_by_index: dict[int, str] = {}
    for score, group in zip(scores, instance.features):
        style = _tint(float(score), max_abs)
        for idx in group.token_indices():
            style_by_index[idx] = style
    parts = []
    for idx, tok in enumerate(instance.input_tokens):
        style = style_by_index.get(idx, "")
        parts.append(f'<span class="tok" style="{style}">{html.escape(tok)}</span>')
    return f'<div class="tokens">{" ".join(parts)}</div>'


def render_report(
    instance: Instance,
    matrix: AttributionMatrix,
    aggregation: str = "sum",
    manifest: dict | None = None,
    title: str = "Feature attribution",
) -> str:
    """One aggregate view plus one view per output token."""
    phi = matrix.phi
    max_abs = float(np.max(np.abs(phi))) if phi.size else 0.0
    saliency = aggregate_attribution(matrix, aggregation)
    agg_max = float(np.max(np.abs(saliency.scores))) if saliency.scores.size else 0.0

    views = [
        '<div class="view"><h2>Aggregate over output tokens '
        f"({aggregation})</h2>{_token_view(instance, saliency.scores, agg_max)}</div>"
    ]
    for t, out_tok in enumerate(instance.output_tokens):
        views.append(
            f'<div class="view"><h2>Output token {t}: '
            f"&ldquo;{html.escape(out_tok)}&rdquo;</h2>"
            f"{_token_view(instance, phi[:, t], max_abs)}</div>"
        )

    header = "".join(
        f"<th>t={t} {html.escape(tok)}</th>"
        for t, tok in enumerate(instance.output_tokens)
    )
    rows = []
    for i, group in enumerate(instance.features):
        cells = "".join(f"<td>{phi[i, t]:+.4f}</td>" for t in range(phi.shape[1]))
        rows.append(f"<tr><th>{html.escape(group.name)}</th>{cells}</tr>")
    score_table = (
        '<table class="scores"><tr><th>feature</th>' + header + "</tr>"
        + "".join(rows)
        + "</table>"
    )

    return _PAGE.format(
        title=html.escape(title),
        method=html.escape(matrix.method),
        seed=matrix.seed,
        output=" ".join(html.escape(t) for t in instance.output_tokens),
        views="\n".join(views),
        score_table=score_table,
        manifest=json.dumps(manifest or {}),
    )

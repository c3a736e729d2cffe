"""
Export a tableau to graphviz' dot format

Node numbers follow creation order. Poised nodes are drawn with a double
border, rejected leaves carry the rejecting rule and the accepted leaf the
witness. To render:

    dot -Tpng -O tableau.gv
"""

from pathlib import Path

from tableau.engine import format_label


def _escape(text):
    return text.replace("\\", "\\\\").replace('"', '\\"')


def render_dot(tableau, witness=None):
    lines = ["digraph tableau {", "\tnode [shape=box, fontname=monospace];"]
    for node in tableau.nodes:
        parts = [f"{node.id}: {format_label(node.label)}"]
        attrs = []
        if node.entry is not None:
            attrs.append("peripheries=2")
        if node.status == "rejected":
            parts.append(f"✗ {node.rule}")
            attrs.append("color=red")
        elif node.status == "accepted":
            parts.append("✓ EMPTY")
            if witness is not None:
                parts.extend(str(witness).splitlines())
            attrs.append("color=darkgreen")
        elif node.status == "cut":
            parts.append("step bound")
            attrs.append("style=dashed")
        label = "\\n".join(_escape(p) for p in parts)
        extra = "".join(f", {a}" for a in attrs)
        lines.append(f'\t"{node.id}" [label="{label}"{extra}];')
    for node in tableau.nodes:
        for child in node.children:
            # STEP edges drawn bold
            style = " [style=bold]" if child.steps > node.steps else ""
            lines.append(f'\t"{node.id}" -> "{child.id}"{style};')
    lines.append("}")
    return "\n".join(lines) + "\n"


# ============================================================================
# MAIN / PUBLIC API
# ============================================================================
def export_dot(tableau, path, witness=None):
    """Write the tableau of a finished search to ``path``; returns the path."""
    path = Path(path)
    path.write_text(render_dot(tableau, witness))
    return path

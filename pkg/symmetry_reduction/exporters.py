"""Report exporters: rich text for terminals, key=value lines for diffing, JSON."""

import io
import json
import math
from pathlib import Path
from typing import List, Sequence

from jinja2 import Environment
from rich.console import Console
from rich.markup import escape

from .pipeline import ExampleReport


def format_float(value: float) -> str:
    """17 significant digits; nan and inf spelled out."""
    if math.isnan(value):
        return "nan"
    if math.isinf(value):
        return "inf" if value > 0 else "-inf"
    return format(value, ".17g")


class BaseExporter:
    """Base class for exporters."""

    def __init__(self, reports: Sequence[ExampleReport]):
        self.reports = list(reports)

    @property
    def passed(self) -> int:
        return sum(1 for r in self.reports if r.ok)

    def render(self) -> str:
        raise NotImplementedError

    def export(self, output_path: Path) -> None:
        """Write the rendered report as UTF-8 with LF endings."""
        with open(output_path, "w", encoding="utf-8", newline="\n") as f:
            f.write(self.render())


class TextExporter(BaseExporter):
    """Human-readable report rendered with rich markup."""

    TEXT_TEMPLATE = """\
{% for report in reports %}
[bold]{{ report.tag | esc }}[/bold]
{#- #}  {% if report.ok %}[green]PASS[/green]{% else %}[red]FAIL[/red]{% endif %}
{#- #}  [dim]seed {{ report.seed }}, eps {{ report.tolerances.eps_zero | num }}[/dim]
{% for check in report.checks %}
  {{ check.status | badge }} {{ check.name | esc }}
{#- #}{% if check.max_residual %} [dim]max residual {{ check.max_residual | num }}[/dim]{% endif %}
{#- #}{% if check.detail %} [dim]({{ check.detail | esc }})[/dim]{% endif %}
{% if check.witness and not check.ok %}      witness: {{ check.witness | esc }}
{% endif %}
{% endfor %}
{% for key, value in report.outputs %}
  [cyan]{{ key | esc }}[/cyan] = {{ value | esc }}
{% endfor %}
{% for key, value in report.stats %}
  [cyan]{{ key | esc }}[/cyan] = {{ value | num }}
{% endfor %}

{% endfor %}
[bold]{{ passed }}/{{ total }} passed[/bold]
"""

    BADGES = {
        "pass": "[green]ok  [/green]",
        "fail": "[red]FAIL[/red]",
        "inconclusive": "[yellow]??  [/yellow]",
        "error": "[bold red]ERR [/bold red]",
    }

    def __init__(self, reports: Sequence[ExampleReport], width: int = 110):
        super().__init__(reports)
        self.width = width

    def markup(self) -> str:
        environment = Environment(trim_blocks=True)
        environment.filters["esc"] = lambda s: escape(str(s))
        environment.filters["num"] = lambda x: format(float(x), ".3g")
        environment.filters["badge"] = lambda s: self.BADGES.get(s, s)
        template = environment.from_string(self.TEXT_TEMPLATE)
        return template.render(reports=self.reports, passed=self.passed, total=len(self.reports))

    def render(self) -> str:
        console = Console(file=io.StringIO(), record=True, width=self.width, color_system=None)
        console.print(self.markup(), highlight=False, soft_wrap=True)
        return console.export_text()

    def print(self, console: Console) -> None:
        console.print(self.markup(), highlight=False)


class MachineExporter(BaseExporter):
    """Line-oriented key=value records, one block per example, no timestamps."""

    def lines(self) -> List[str]:
        out = [f"reports={len(self.reports)}", f"passed={self.passed}"]
        for report in self.reports:
            prefix = report.tag
            out.append(f"{prefix}.status={report.status}")
            out.append(f"{prefix}.seed={report.seed}")
            for key in sorted(report.tolerances):
                out.append(f"{prefix}.tolerance.{key}={format_float(report.tolerances[key])}")
            for check in report.checks:
                head = f"{prefix}.check.{check.name}"
                out.append(f"{head}.status={check.status}")
                out.append(f"{head}.max_residual={format_float(check.max_residual)}")
                if check.witness:
                    out.append(f"{head}.witness={check.witness}")
                if check.detail:
                    out.append(f"{head}.detail={check.detail}")
            for key, value in report.outputs:
                out.append(f"{prefix}.output.{key}={value}")
            for key, value in report.stats:
                out.append(f"{prefix}.stat.{key}={format_float(value)}")
        return out

    def render(self) -> str:
        return "\n".join(line.replace("\n", " ") for line in self.lines()) + "\n"


class JSONExporter(BaseExporter):
    """Export reports to JSON."""

    def render(self) -> str:
        data = {
            "reports": [r.to_dict() for r in self.reports],
            "passed": self.passed,
            "total": len(self.reports),
        }
        return json.dumps(data, indent=2) + "\n"


def create_exporter(format_type: str, reports: Sequence[ExampleReport]) -> BaseExporter:
    """Factory function to create the appropriate exporter."""
    exporters = {
        "text": TextExporter,
        "machine": MachineExporter,
        "json": JSONExporter,
    }

    exporter_class = exporters.get(format_type.lower())
    if not exporter_class:
        raise ValueError(f"Unsupported format: {format_type}")

    return exporter_class(reports)

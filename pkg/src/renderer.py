"""HTML report rendering module using Jinja2 templates."""

from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence

from jinja2 import Environment, FileSystemLoader, TemplateNotFound, TemplateSyntaxError


@dataclass
class ReportTable:
    """One titled table of a report."""

    title: str
    header: Sequence[str]
    rows: List[Sequence] = field(default_factory=list)


def format_number(value, digits: int = 4) -> str:
    """
    Format floats to a fixed number of decimals; pass other values through.

    Args:
        value: Cell value
        digits: Decimals to keep for floats

    Returns:
        Display string
    """
    if isinstance(value, bool):
        return "yes" if value else "no"
    if isinstance(value, float):
        return f"{value:.{digits}f}"
    return str(value)


def render_report(
    title: str,
    tables: Sequence[ReportTable],
    summary: Optional[Dict[str, object]] = None,
    template_path: Optional[str] = None,
) -> str:
    """
    Render a report as HTML using a Jinja2 template.

    Args:
        title: Report title
        tables: Tables to show, in order
        summary: Optional key/value lines shown above the tables
        template_path: Optional custom path to template file.
                      If None, uses default templates/report.html

    Returns:
        Rendered HTML string

    Raises:
        FileNotFoundError: If template file is not found
        ValueError: If template has syntax errors or rendering fails
    """
    if template_path:
        template_file = Path(template_path)
        template_dir = template_file.parent
        template_name = template_file.name
    else:
        project_root = Path(__file__).parent.parent
        template_dir = project_root / "templates"
        template_name = "report.html"

    if not template_dir.exists():
        raise FileNotFoundError(
            f"Template directory not found: {template_dir}"
        )

    try:
        env = Environment(
            loader=FileSystemLoader(str(template_dir)),
            autoescape=True,
            trim_blocks=True,
            lstrip_blocks=True,
        )
        env.filters["num"] = format_number

        template = env.get_template(template_name)
        return template.render(
            title=title,
            tables=tables,
            summary=summary or {},
        )

    except TemplateNotFound as e:
        raise FileNotFoundError(
            f"Template not found: {template_name} in {template_dir}"
        ) from e

    except TemplateSyntaxError as e:
        raise ValueError(
            f"Template syntax error in {template_name}: {str(e)}"
        ) from e

    except Exception as e:
        raise ValueError(
            f"Error rendering template: {str(e)}"
        ) from e

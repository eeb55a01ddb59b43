"""Table views for evaluation reports and training curves.

This module renders metric summaries, stage-2 curves and phase histories
with the Rich library.
"""

import logging
from typing import List, Optional, Sequence

from rich.align import Align
from rich.console import Console
from rich.panel import Panel
from rich.table import Table
from rich.text import Text

from pesqnet_dns.core.models import CurvePoint
from pesqnet_dns.evaluation.report import ConditionSummary, MetricReport

logger = logging.getLogger(__name__)


def format_optional(value: Optional[float], digits: int = 3) -> str:
    """Fixed-point text, or "n/a" for undefined values."""
    return "n/a" if value is None else f"{value:.{digits}f}"


class ReportViewsController:
    """Controller for report and curve tables."""

    def __init__(self, console: Optional[Console] = None):
        """Initialize the report views controller.

        Args:
            console: Optional Console instance for rich output
        """
        self.console = console or Console()
        self.key_style = "cyan"
        self.value_style = "white"
        self.accent_style = "yellow"
        self.success_style = "green"
        self.warning_style = "yellow"
        self.border_style = "bright_blue"

    def _create_base_table(self, title: str, columns: Sequence[str]) -> Table:
        """Create a table with the shared look; the first column is the key.

        Args:
            title: Table title
            columns: Column headers

        Returns:
            Rich Table object with columns added
        """
        table = Table(
            title=title,
            title_style="bold cyan",
            show_header=True,
            header_style="bold",
            border_style=self.border_style,
            expand=False,
        )
        for i, name in enumerate(columns):
            if i == 0:
                table.add_column(name, style=self.key_style)
            else:
                table.add_column(name, style=self.value_style, justify="right")
        return table

    def create_report_table(self, summaries: List[ConditionSummary]) -> Table:
        """Create the per-condition metric table.

        Args:
            summaries: Condition summaries, the last one may be the overall row

        Returns:
            Rich Table object
        """
        table = self._create_base_table(
            "Evaluation",
            ["Condition", "N", "PESQ", "PESQNet", "MAE", "LCC", "ΔSNRseg (dB)"],
        )
        for s in summaries:
            style = self.accent_style if s.condition == "all" else None
            cells = [
                s.condition,
                str(s.count),
                f"{s.mean_pesq_true:.3f}",
                f"{s.mean_pesq_hat:.3f}",
                f"{s.mae:.3f}",
                format_optional(s.lcc),
                format_optional(s.mean_delta_snr_seg, 2),
            ]
            table.add_row(*[Text(c, style=style) if style else c for c in cells])
        return table

    def create_curves_table(self, curves: Sequence[CurvePoint]) -> Table:
        """Create the stage-2 curve table.

        Args:
            curves: Curve points in epoch order

        Returns:
            Rich Table object
        """
        table = self._create_base_table(
            "Alternating fine-tuning", ["τ", "Model", "J_total", "MAE", "Oracle"]
        )
        for c in curves:
            trained = "-" if c.tau == 0 else ("DNS" if c.tau % 2 == 1 else "PESQNet")
            table.add_row(
                str(c.tau),
                trained,
                f"{c.j_total:.5g}",
                f"{c.mae:.3f}",
                f"{c.mean_oracle_score:.3f}",
            )
        return table

    def create_history_table(self, name: str, history: Sequence[object]) -> Table:
        """Create a plateau-phase history table.

        Args:
            name: Phase name
            history: Records with epoch, train_loss, val_loss and lr

        Returns:
            Rich Table object
        """
        table = self._create_base_table(name, ["Epoch", "Train", "Validation", "LR"])
        for h in history:
            table.add_row(
                str(getattr(h, "epoch")),
                f"{getattr(h, 'train_loss'):.5g}",
                f"{getattr(h, 'val_loss'):.5g}",
                f"{getattr(h, 'lr'):.3g}",
            )
        return table

    def create_summary_panel(self, title: str, lines: Sequence[str]) -> Panel:
        """Create a summary panel.

        Args:
            title: Panel title
            lines: Text lines

        Returns:
            Rich Panel object
        """
        return Panel(
            Align.center(Text("\n".join(lines), style=self.value_style)),
            title=title,
            title_align="center",
            border_style=self.border_style,
            expand=False,
            padding=(1, 2),
        )

    def create_no_data_display(self, what: str) -> Panel:
        """Create a display for an empty report.

        Args:
            what: What is missing, e.g. 'evaluation'

        Returns:
            Rich Panel object
        """
        message = Text(
            f"No {what} data.\n\nCheck the corpus split and its index.",
            style=self.warning_style,
            justify="center",
        )
        return Panel(
            Align.center(message, vertical="middle"),
            title=f"No {what.capitalize()} Data",
            title_align="center",
            border_style=self.warning_style,
            expand=True,
            height=8,
        )

    def display_report(self, report: MetricReport) -> None:
        """Print the evaluation summary and per-condition table."""
        if not report.rows:
            self.console.print(self.create_no_data_display("evaluation"))
            return
        summaries = report.summaries() + [report.summarize()]
        overall = summaries[-1]
        panel = self.create_summary_panel(
            "Summary",
            [
                f"Scored signals: {overall.count}",
                f"MAE: {overall.mae:.3f}",
                f"LCC: {format_optional(overall.lcc)}",
            ],
        )
        self.console.print(panel)
        self.console.print()
        self.console.print(self.create_report_table(summaries))

    def display_curves(self, curves: Sequence[CurvePoint], best_tau: int) -> None:
        """Print the stage-2 curves with the selected epoch."""
        if not curves:
            self.console.print(self.create_no_data_display("curve"))
            return
        self.console.print(self.create_curves_table(curves))
        self.console.print(Text(f"Selected τ = {best_tau}", style=self.success_style))

    def display_history(self, name: str, history: Sequence[object], best_epoch: int) -> None:
        """Print a phase history with its best epoch."""
        self.console.print(self.create_history_table(name, history))
        self.console.print(Text(f"Best epoch: {best_epoch}", style=self.success_style))

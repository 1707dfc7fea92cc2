"""
Excel exporter for result tables.

Writes a workbook with a 'Metadata' sheet (run record) and a 'Table' sheet
(the numbers), with a styled, frozen header row.
"""
import json
from pathlib import Path

import pandas as pd
from openpyxl import load_workbook
from openpyxl.styles import Alignment, Border, Font, PatternFill, Side
from openpyxl.utils import get_column_letter

from src.exporters.table_exporter import ResultTable, flatten_for_table

NUMBER_FORMAT = '0.000000000000E+00'


class ExcelExporter:
    """Export one ResultTable to an .xlsx workbook."""

    def __init__(self, table: ResultTable):
        self.table = table

    def export(self, output_path: str):
        """
        Export the table to an Excel file.

        Args:
            output_path: Path where the workbook will be saved
        """
        output_path = Path(output_path)

        with pd.ExcelWriter(output_path, engine='openpyxl') as writer:
            self._write_metadata(writer)
            self._write_table(writer)

        self._apply_formatting(output_path)

    def _write_metadata(self, writer):
        """Metadata as two columns; nested values are JSON-encoded."""
        fields, values = [], []
        for key, value in self.table.metadata.items():
            fields.append(key)
            values.append(value if isinstance(value, (int, float, str)) else json.dumps(value, sort_keys=True))
        pd.DataFrame({'Field': fields, 'Value': values}).to_excel(writer, sheet_name='Metadata', index=False)

    def _write_table(self, writer):
        flatten_for_table(self.table.frame).to_excel(writer, sheet_name='Table', index=False)

    def _apply_formatting(self, file_path: Path):
        """Header styling, column widths, number format and frozen header."""
        wb = load_workbook(file_path)

        header_fill = PatternFill(start_color="366092", end_color="366092", fill_type="solid")
        header_font = Font(bold=True, color="FFFFFF", size=11)
        border = Border(
            left=Side(style='thin'),
            right=Side(style='thin'),
            top=Side(style='thin'),
            bottom=Side(style='thin')
        )

        for sheet_name in wb.sheetnames:
            ws = wb[sheet_name]

            for cell in ws[1]:
                cell.fill = header_fill
                cell.font = header_font
                cell.alignment = Alignment(horizontal='center', vertical='center')
                cell.border = border

            for column in ws.columns:
                longest = max((len(str(cell.value)) for cell in column if cell.value is not None), default=0)
                ws.column_dimensions[get_column_letter(column[0].column)].width = min(longest + 2, 50)

            for row in ws.iter_rows(min_row=2):
                for cell in row:
                    cell.border = border
                    if isinstance(cell.value, float):
                        cell.number_format = NUMBER_FORMAT
                        cell.alignment = Alignment(horizontal='right')

            ws.freeze_panes = ws['A2']

        wb.save(file_path)


def export_to_excel(table: ResultTable, output_path: str):
    """
    Convenience function to export a result table to Excel.

    Args:
        table: The ResultTable to export
        output_path: Path where the workbook will be saved
    """
    ExcelExporter(table).export(output_path)

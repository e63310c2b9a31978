"""File formats and figures."""

from src.integrations.csv_io import (
    read_dataset,
    read_network_csv,
    read_unit_table,
    write_frame,
    write_network_csv,
    write_unit_table,
)

__all__ = [
    "read_dataset",
    "read_network_csv",
    "read_unit_table",
    "write_frame",
    "write_network_csv",
    "write_unit_table",
]

"""SQL parsing and translation into table constraints."""

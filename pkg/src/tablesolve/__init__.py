"""tablesolve: satisfiability of table constraints and SQL query equivalence."""

__version__ = "0.1.0"

"""Config loading, experiment execution, reporting and the command line."""

"""Frozen output field names; bump SCHEMA_VERSION whenever one changes."""

SCHEMA_VERSION = "1.0"

REPORT_FIELDS = ("schema_version", "subcommand", "config", "results", "checks", "passed")
CHECK_FIELDS = ("name", "value", "tolerance", "passed", "assertion")
DECAY_CSV_COLUMNS = ("n", "log_n", "sup_norm", "l1_mass", "d_n", "backend", "sign_source")
LAMBDA_CSV_COLUMNS = ("p", "mp_lower", "mp_lower_over_sqrt_p", "probe_count")
CERTIFICATE_FIELDS = ("A", "alpha", "delta", "epsilon", "linear_terms", "tail_bound",
                      "certified_lower", "exact_expansion", "seed")

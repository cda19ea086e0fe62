class QcqpUsageError(ValueError):
    """Malformed problem data: shape mismatch, non-Hermitian or non-finite."""

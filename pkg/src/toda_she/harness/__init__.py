"""Configuration, orchestration and reporting for the ``toda-she`` command."""

# Cascade Toolkit Package

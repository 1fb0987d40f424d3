# Cascade toolkit result types

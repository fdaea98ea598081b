# Numerical core: series ingestion, VAR fitting, spectra, power
# contribution decomposition and simulation.

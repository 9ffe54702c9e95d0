"Writer per log CSV, manifest JSON, mappe PGM e grafici."

"""Special flows over irrational rotations: arithmetic, cocycles, flows and witnesses."""

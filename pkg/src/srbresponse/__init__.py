"""Linear response of SRB measures for piecewise expanding unimodal maps."""

# Copyright 2026 The dexc Authors
# SPDX-License-Identifier: Apache-2.0
#
#
# Configuration file for the Sphinx documentation builder.

import pkg_resources

# -- Project information -----------------------------------------------------

dexc = pkg_resources.get_distribution("dexc")

project = dexc.project_name
author = "The dexc Authors"
copyright = f"2026, {author}"

version = dexc.version
release = version

# -- General configuration ---------------------------------------------------

extensions = []

templates_path = ["_templates"]
exclude_patterns = []


# -- Options for HTML output -------------------------------------------------

html_theme = "classic"

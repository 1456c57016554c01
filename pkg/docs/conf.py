# -*- coding: utf-8 -*-
#
# Configuration file for the Sphinx documentation builder.
#
# http://www.sphinx-doc.org/en/master/config

# -- Path setup --------------------------------------------------------------

import os
import sys
sys.path.insert(0, os.path.abspath('..'))


# -- Project information -----------------------------------------------------

project = 'causalpatterns'
copyright = '2026, causalpatterns developers'
author = 'causalpatterns developers'

import causalpatterns as cp
version = cp.__version__[:3]
release = cp.__version__


# -- General configuration ---------------------------------------------------

extensions = [
    'sphinx.ext.autodoc',
    'sphinx.ext.intersphinx',
    'numpydoc',
]

templates_path = ['_templates']
source_suffix = '.rst'
master_doc = 'index'
language = None
exclude_patterns = ['_build', 'Thumbs.db', '.DS_Store']
pygments_style = None

modindex_common_prefix = ['causalpatterns.']
autoclass_content = 'both'
autosummary_generate = True
numpydoc_show_class_members = False


# -- Options for HTML output -------------------------------------------------

html_theme = 'bizstyle'
html_static_path = ['_static']
html_title = 'causalpatterns Documentation'
html_sidebars = {'**': ['globaltoc.html', 'relations.html', 'searchbox.html']}
htmlhelp_basename = 'causalpatternsdoc'


# -- Options for LaTeX / manual / Texinfo output ------------------------------

latex_documents = [
    (master_doc, 'causalpatterns.tex', 'causalpatterns Documentation', author, 'manual'),
]
man_pages = [
    (master_doc, 'causalpatterns', 'causalpatterns Documentation', [author], 1)
]
texinfo_documents = [
    (master_doc, 'causalpatterns', 'causalpatterns Documentation', author, 'causalpatterns',
     'Causal pattern extraction from paired time series.', 'Miscellaneous'),
]


# -- Extension configuration -------------------------------------------------

intersphinx_mapping = {
    'python': ('https://docs.python.org/3', None),
    'numpy': ('https://numpy.org/doc/stable/', None),
    'scipy': ('https://docs.scipy.org/doc/scipy/', None),
}

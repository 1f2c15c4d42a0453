import os
from setuptools import setup, find_packages

requirements = []
requirements_file = 'requirements.txt'

# Check if the file exists
if os.path.exists(requirements_file):
    with open(requirements_file) as f:
        requirements = f.read().splitlines()
setup(
    name='cubic-metrology',
    version='v1.0.0',
    packages=find_packages(exclude=['tests', 'examples*']),
    package_data={'CubicMetrology': ['schemas/v1/*.json']},
    install_requires=requirements,
    entry_points={'console_scripts': ['cubic-metrology=CubicMetrology.Cli:main']},
    long_description=open('README.md').read(),
    long_description_content_type='text/markdown',
)

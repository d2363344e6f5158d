from setuptools import setup, find_packages

setup(
    name='sfmpy',
    version='0.1.0',
    packages=find_packages(exclude=['examples', 'examples.*']),
    install_requires=[
        'pandas',
        'numpy',
        'tqdm',
        'scipy'
    ],
    entry_points={'console_scripts': ['sfmpy=sfmpy.harness_cli.commands:main']},
    license='GNU v.3',
    author='Adam Richard-Bollans',
    description='A python package for reward-free imitation learning by successor feature matching',
    long_description=open('README.md', encoding="utf8").read()
)

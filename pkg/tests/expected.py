"""Reference lineage rows and reference-list values the fixtures must reproduce."""

LINEAGE_HEADERS = [
    "Input Data Stage", "Input Variable", "Derivation", "Derivation Rule", "Output Variable", "Output Data Stage",
]

STUDY_DAY_RULE = (
    "Calculate the study day from a given start date. The start day is day 1, then day prior to this is day -1. "
    "There is no day 0. If AE.AEENDTN is on or after AE.RFSTDN then (date portion of AE.AEENDTN) - "
    "(date portion of AE.RFSTDN)+ 1..."
)

# Reference rows for the AE end-date roll-up.
LINEAGE_ROWS = [
    ["4", "RP.AE.AEENDAT [End Date of Adverse Event]", "NCDS COPY_ELEMENT", "AEENDAT = AE.AEENDAT",
     "DR.AE.AEENDAT [End Date of Adverse Event]", "5"],
    ["4", "RP.AE.AEENTIM [End Time of Adverse Event]", "NCDS COPY_ELEMENT", "AEENTIM = AE.AEENTIM",
     "DR.AE.AEENTIM [End Time of Adverse Event]", "5"],
    ["5", "DR.AE.AEENDAT [End Date of Adverse Event]", "NCDS DTC",
     "Convert date variable AE.AEENDAT and time variable AE.AEENTIM",
     "DR.AE.AEENDTC [End Date/Time of Adverse Event]", "5"],
    ["5", "DR.AE.AEENTIM [End Time of Adverse Event]", "NCDS DTC",
     "Convert date variable AE.AEENDAT and time variable AE.AEENTIM",
     "DR.AE.AEENDTC [End Date/Time of Adverse Event]", "5"],
    ["5", "DR.AE.AEENDTC [End Date/Time of Adverse Event]", "NCDS DTN",
     "Convert AE.AEENDTC to numeric ISO 8601 format.",
     "DR.AE.AEENDTN [End Date/Time of Adverse Event]", "5"],
    ["5", "DR.AE.AEENDTN [End Date/Time of Adverse Event]", "NCDS STUDY_DAY", STUDY_DAY_RULE,
     "DR.AE.AEENDY [Study Day of End of Adverse Event]", "5"],
    ["5", "DR.AE.AEENDY [Study Day of End of Adverse Event]", "NCDS COPY_ELEMENT", "AEENDY = AE.AEENDY",
     "SD.AE.AEENDY [Study Day of End of Adverse Event]", "6"],
    ["5", "DR.AE.AEENDY [Study Day of End of Adverse Event]", "NCDS COPY_ELEMENT", "AEENDY = DR.AE.AEENDY",
     "AD.ADAE.AEENDY [Study Day of End of Adverse Event]", "7"],
]

INPUT_STAGES = ["4", "4", "5", "5", "5", "5", "5", "5"]
OUTPUT_STAGES = ["5", "5", "5", "5", "5", "5", "6", "7"]

SEX_MEMBERS = {"Male", "Female", "Undifferentiated", "Unknown"}
SEX_SOURCES = ["GSK.DEMO.SEX", "NOVDD.DMG.SEX1C", "DM.SEX"]
